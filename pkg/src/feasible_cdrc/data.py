"""Observational data, intervention grid and run configuration.

Everything in here is immutable once built: arrays are flagged read-only so a
single :class:`Dataset` can be shared between bootstrap workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import ConfigError, DataError

__all__ = [
    "Dataset",
    "Schema",
    "InterventionGrid",
    "DensitySpec",
    "BootstrapSpec",
    "GridSpec",
    "RunConfig",
    "load_dataset",
    "write_dataset",
    "make_grid",
    "load_config",
    "DENSITY_METHODS",
    "OUTCOME_FAMILIES",
    "OUTCOME_BASES",
]

DENSITY_METHODS = ("gaussian", "kernel", "hazard")
OUTCOME_FAMILIES = ("gaussian", "binomial")
OUTCOME_BASES = ("linear", "poly", "interaction")

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


def _frozen(arr, ndim):
    arr = np.array(arr, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """n observations of (confounders L, treatment A, outcome Y)."""

    confounders: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    confounder_names: tuple[str, ...] = ()
    treatment_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self):
        L = np.asarray(self.confounders, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        object.__setattr__(self, "confounders", _frozen(L, 2))
        object.__setattr__(self, "treatment", _frozen(self.treatment, 1))
        object.__setattr__(self, "outcome", _frozen(self.outcome, 1))
        n, q = self.confounders.shape
        if n < 1 or q < 1:
            raise DataError(f"dataset needs n >= 1 and q >= 1, got n={n}, q={q}")
        if self.treatment.shape[0] != n or self.outcome.shape[0] != n:
            raise DataError("confounders, treatment and outcome must have the same length")
        for name, arr in (("confounders", self.confounders), ("treatment", self.treatment),
                          ("outcome", self.outcome)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        names = tuple(self.confounder_names) or tuple(f"L{k + 1}" for k in range(q))
        if len(names) != q:
            raise DataError(f"got {len(names)} confounder names for {q} columns")
        object.__setattr__(self, "confounder_names", names)

    @property
    def n(self) -> int:
        return self.confounders.shape[0]

    @property
    def q(self) -> int:
        return self.confounders.shape[1]

    def subset(self, index) -> Dataset:
        """Rows ``index`` (may repeat, as in a bootstrap resample)."""
        index = np.asarray(index)
        return Dataset(self.confounders[index], self.treatment[index], self.outcome[index],
                       self.confounder_names, self.treatment_name, self.outcome_name)

    def check_binary_outcome(self):
        bad = np.flatnonzero((self.outcome != 0) & (self.outcome != 1))
        if bad.size:
            raise DataError(f"outcome not binary at row {bad[0] + 1}")

    def summary(self) -> dict:
        return {
            "n": self.n,
            "q": self.q,
            "confounders": list(self.confounder_names),
            "treatment": self.treatment_name,
            "outcome": self.outcome_name,
            "treatment_range": [float(self.treatment.min()), float(self.treatment.max())],
        }


@dataclass(frozen=True)
class Schema:
    """Column-name mapping for :func:`load_dataset`.

    ``confounders=None`` means every column that is neither the treatment nor
    the outcome, in header order.
    """

    treatment: str = "A"
    outcome: str = "Y"
    confounders: tuple[str, ...] | None = None


def _parse_cell(value, row, column):
    if value is None:
        raise DataError(f"missing value at row {row}, column '{column}'")
    if isinstance(value, (int, float, np.number)) and not isinstance(value, bool):
        x = float(value)
        if math.isnan(x):
            raise DataError(f"missing value at row {row}, column '{column}'")
    else:
        text = str(value).strip()
        if text.lower() in _MISSING_TOKENS:
            raise DataError(f"missing value at row {row}, column '{column}'")
        try:
            x = float(text)
        except ValueError:
            raise DataError(f"non-numeric value {text!r} at row {row}, column '{column}'") from None
    if not math.isfinite(x):
        raise DataError(f"non-finite value at row {row}, column '{column}'")
    return x


def _rows_from_source(source):
    """Return (header, list of row mappings) from a path, file object or iterable."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _rows_from_source(fh)
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        reader = csv.DictReader(source)
        header = reader.fieldnames
        rows = []
        for k, rec in enumerate(reader, start=1):
            if None in rec:
                raise DataError(f"row {k} has more cells than the header")
            rows.append(rec)
        return (list(header) if header else []), rows
    rows = [dict(r) for r in source]
    header = list(rows[0].keys()) if rows else []
    return header, rows


def load_dataset(source, schema: Schema | None = None, family: str = "gaussian") -> Dataset:
    """Load and validate a row-oriented table.

    Parameters
    ----------
    source : path, open text file, or iterable of row mappings
        CSV input needs a header row; cells use '.' as decimal separator.
    schema : Schema, optional
        Which columns hold treatment, outcome and confounders.
    family : {"gaussian", "binomial"}
        Outcome family; ``"binomial"`` additionally requires 0/1 outcomes.

    Raises
    ------
    DataError
        On a missing column, an empty table, a missing or non-numeric cell, or
        a non-binary outcome under the binomial family. Rows are numbered from
        1, excluding the header.
    """
    schema = schema or Schema()
    header, rows = _rows_from_source(source)
    if not rows:
        raise DataError("empty table")
    for col in (schema.treatment, schema.outcome, *(schema.confounders or ())):
        if col not in header:
            raise DataError(f"missing column '{col}'")
    conf_names = schema.confounders
    if conf_names is None:
        conf_names = tuple(c for c in header if c not in (schema.treatment, schema.outcome))
    if not conf_names:
        raise DataError("no confounder columns")
    n, q = len(rows), len(conf_names)
    L = np.empty((n, q))
    A = np.empty(n)
    Y = np.empty(n)
    for r, rec in enumerate(rows):
        row = r + 1
        for col in (schema.treatment, schema.outcome, *conf_names):
            if col not in rec:
                raise DataError(f"missing value at row {row}, column '{col}'")
        A[r] = _parse_cell(rec[schema.treatment], row, schema.treatment)
        Y[r] = _parse_cell(rec[schema.outcome], row, schema.outcome)
        for k, col in enumerate(conf_names):
            L[r, k] = _parse_cell(rec[col], row, col)
    if family not in OUTCOME_FAMILIES:
        raise DataError(f"unknown outcome family {family!r}")
    data = Dataset(L, A, Y, tuple(conf_names), schema.treatment, schema.outcome)
    if family == "binomial":
        data.check_binary_outcome()
    return data


def write_dataset(data: Dataset, path) -> None:
    """Write ``data`` as CSV with 17 significant digits (exact round trip)."""
    cols = [*data.confounder_names, data.treatment_name, data.outcome_name]
    table = np.column_stack([data.confounders, data.treatment, data.outcome])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow([f"{x:.17g}" for x in row])


@dataclass(frozen=True, eq=False)
class InterventionGrid:
    """Uniform grid a_1 < ... < a_m with midpoint-rule cell widths."""

    values: np.ndarray
    cell_widths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 1))
        object.__setattr__(self, "cell_widths", _frozen(self.cell_widths, 1))
        if self.values.size < 2 or np.any(np.diff(self.values) <= 0):
            raise DataError("grid needs m >= 2 strictly increasing values")
        if self.cell_widths.shape != self.values.shape or np.any(self.cell_widths <= 0):
            raise DataError("cell widths must be positive, one per grid value")

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return float(self.values[1] - self.values[0])

    def __len__(self):
        return self.m


def make_grid(a_min: float, a_max: float, m: int) -> InterventionGrid:
    """Equally spaced grid of ``m`` points on ``[a_min, a_max]``.

    Interior cells are one step wide and the two boundary cells half a step,
    so the cells tile ``[a_min, a_max]`` exactly.

    >>> make_grid(0, 1, 2).cell_widths
    array([0.5, 0.5])
    """
    if not (np.isfinite(a_min) and np.isfinite(a_max)) or a_min >= a_max:
        raise DataError(f"grid needs a_min < a_max, got [{a_min}, {a_max}]")
    if int(m) != m or m < 2:
        raise DataError(f"grid needs m >= 2 points, got {m}")
    m = int(m)
    values = np.linspace(a_min, a_max, m)
    step = (a_max - a_min) / (m - 1)
    widths = np.full(m, step)
    widths[0] = widths[-1] = step / 2
    return InterventionGrid(values, widths)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DensitySpec:
    method: str = "gaussian"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in DENSITY_METHODS:
            raise ConfigError(f"unknown density method {self.method!r}; "
                              f"expected one of {DENSITY_METHODS}")
        object.__setattr__(self, "params", dict(self.params))


@dataclass(frozen=True)
class BootstrapSpec:
    B: int = 0
    seed: int = 0
    split: bool = False

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 0:
            raise ConfigError(f"bootstrap.B must be a non-negative integer, got {self.B!r}")


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    m: int

    def build(self) -> InterventionGrid:
        try:
            return make_grid(self.min, self.max, self.m)
        except DataError as exc:
            raise ConfigError(f"invalid grid: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to run the estimation pipeline once.

    ``support_levels`` lists every level requested (the diagnostic reports all
    of them); estimation uses the first one, exposed as ``support_level``.
    """

    support_levels: tuple[float, ...] = (0.95,)
    density: DensitySpec = field(default_factory=DensitySpec)
    outcome_family: str = "gaussian"
    outcome_basis: str = "linear"
    outcome_degree: int = 3
    weighted_cutoff: float | None = None
    bootstrap: BootstrapSpec = field(default_factory=BootstrapSpec)
    grid: GridSpec | None = None
    schema: Schema = field(default_factory=Schema)

    def __post_init__(self):
        levels = tuple(float(a) for a in np.atleast_1d(self.support_levels))
        if not levels or any(not 0 < a < 1 for a in levels):
            raise ConfigError(f"support levels must lie in (0, 1), got {levels}")
        object.__setattr__(self, "support_levels", levels)
        if self.outcome_family not in OUTCOME_FAMILIES:
            raise ConfigError(f"unknown outcome family {self.outcome_family!r}")
        if self.outcome_basis not in OUTCOME_BASES:
            raise ConfigError(f"unknown outcome basis {self.outcome_basis!r}; "
                              f"expected one of {OUTCOME_BASES}")
        if int(self.outcome_degree) != self.outcome_degree or not 1 <= self.outcome_degree <= 3:
            raise ConfigError("outcome polynomial degree must be 1, 2 or 3")
        if self.weighted_cutoff is not None and not self.weighted_cutoff >= 0:
            raise ConfigError(f"weighted_cutoff must be >= 0, got {self.weighted_cutoff}")

    @property
    def support_level(self) -> float:
        return self.support_levels[0]

    def with_(self, **changes) -> RunConfig:
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> RunConfig:
        known = {"support_level", "density", "outcome", "weighted_cutoff", "bootstrap",
                 "grid", "columns"}
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        try:
            if "support_level" in doc:
                kw["support_levels"] = tuple(np.atleast_1d(doc["support_level"]).tolist())
            if "density" in doc:
                d = doc["density"]
                kw["density"] = DensitySpec(d.get("method", "gaussian"), d.get("params", {}))
            if "outcome" in doc:
                o = doc["outcome"]
                kw["outcome_family"] = o.get("family", "gaussian")
                basis = o.get("basis", "linear")
                if isinstance(basis, Mapping):
                    kw["outcome_basis"] = basis.get("name", "linear")
                    kw["outcome_degree"] = basis.get("degree", 3)
                else:
                    kw["outcome_basis"] = basis
            if doc.get("weighted_cutoff") is not None:
                kw["weighted_cutoff"] = float(doc["weighted_cutoff"])
            if "bootstrap" in doc:
                b = doc["bootstrap"]
                kw["bootstrap"] = BootstrapSpec(int(b.get("B", 0)), int(b.get("seed", 0)),
                                                bool(b.get("split", False)))
            if doc.get("grid") is not None:
                g = doc["grid"]
                kw["grid"] = GridSpec(float(g["min"]), float(g["max"]), int(g["m"]))
                kw["grid"].build()
            if "columns" in doc:
                c = doc["columns"]
                conf = c.get("confounders")
                kw["schema"] = Schema(c.get("treatment", "A"), c.get("outcome", "Y"),
                                      tuple(conf) if conf is not None else None)
        except ConfigError:
            raise
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc!r}") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        doc = {
            "support_level": list(self.support_levels),
            "density": {"method": self.density.method, "params": dict(self.density.params)},
            "outcome": {"family": self.outcome_family,
                        "basis": {"name": self.outcome_basis, "degree": self.outcome_degree}},
            "weighted_cutoff": self.weighted_cutoff,
            "bootstrap": {"B": self.bootstrap.B, "seed": self.bootstrap.seed,
                          "split": self.bootstrap.split},
            "grid": None if self.grid is None else
            {"min": self.grid.min, "max": self.grid.max, "m": self.grid.m},
            "columns": {"treatment": self.schema.treatment, "outcome": self.schema.outcome,
                        "confounders": None if self.schema.confounders is None
                        else list(self.schema.confounders)},
        }
        return doc


def load_config(path) -> RunConfig:
    """Parse a JSON config file; errors carry the file and line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return RunConfig.from_dict(doc)

