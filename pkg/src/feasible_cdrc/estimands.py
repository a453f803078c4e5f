"""G-computation plug-in estimators of the dose-response curves.

For every grid value a_i the fitted outcome regression is averaged over the
empirical confounder distribution under four interventions:

* standard  -- everyone receives a_i;
* feasible  -- units outside their HDR receive the nearest supported value;
* trimming  -- average restricted to units for which a_i is supported;
* weighted  -- fixed density cutoff c; below it the unit's prediction is
  down-weighted by f(a_i | l_j) / f(a_i).
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, InterventionGrid, RunConfig, make_grid
from .density import DensityMatrix, density_matrix, fit_cond_density
from .exceptions import NumericalError, ReplicateFailureError
from .outcome import Basis, OutcomeModel, fit_outcome
from .support import NonOverlapCurve, SupportProfile, hdr_thresholds, non_overlap_ratio

__all__ = [
    "CurveSet",
    "PipelineResult",
    "BootstrapResult",
    "plugin_curves",
    "default_grid",
    "run_pipeline",
    "bootstrap_curves",
    "undefined_regions",
    "MAX_FAIL_FRACTION",
]

MAX_FAIL_FRACTION = 0.10
CURVES = ("standard", "feasible", "trimming", "weighted")


@dataclass(frozen=True, eq=False)
class CurveSet:
    """Estimated curves on a grid.

    ``trimming`` holds NaN where no unit is supported; ``trimming_defined``
    marks the valid entries explicitly. ``bands`` maps curve name to a
    ``(lower, upper)`` pair of arrays when bootstrap bands were computed.
    """

    grid: InterventionGrid
    tau: NonOverlapCurve
    standard: np.ndarray
    feasible: np.ndarray
    trimming: np.ndarray
    trimming_defined: np.ndarray
    weighted: np.ndarray | None = None
    bands: dict | None = None

    def curve(self, name):
        return getattr(self, name)

    def available(self):
        return [c for c in CURVES if getattr(self, c) is not None]

    def with_bands(self, bands) -> CurveSet:
        return replace(self, bands=bands)

    def to_csv(self, path):
        cols = ["a", "tau", "m_standard", "m_feasible", "m_trimming"]
        names = self.available()
        if self.weighted is not None:
            cols.append("m_weighted")
        if self.bands:
            for c in names:
                cols += [f"m_{c}_lo", f"m_{c}_hi"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i, a in enumerate(self.grid.values):
                row = [_fmt(a), _fmt(self.tau.tau[i]), _fmt(self.standard[i]),
                       _fmt(self.feasible[i]),
                       _fmt(self.trimming[i]) if self.trimming_defined[i] else ""]
                if self.weighted is not None:
                    row.append(_fmt(self.weighted[i]))
                if self.bands:
                    for c in names:
                        lo, hi = self.bands[c]
                        row += [_fmt(lo[i]), _fmt(hi[i])]
                w.writerow(row)


def _fmt(x):
    return "" if not np.isfinite(x) else f"{x:.17g}"


def _row_sum(M):
    # strictly sequential left-to-right sum; numpy's pairwise reduction can
    # round identical rows differently depending on buffer alignment
    return np.cumsum(M, axis=1)[:, -1]


def plugin_curves(data: Dataset, grid: InterventionGrid, dm: DensityMatrix,
                  profile: SupportProfile, om: OutcomeModel,
                  weighted_cutoff: float | None = None) -> CurveSet:
    """Plug-in estimates of all curves at every grid point.

    Every curve is a row sum of an (m, n) matrix divided by a count, taken in
    the same fixed order, so at a grid point where all units are supported the
    standard, feasible and trimming values come from bit-identical rows and
    agree exactly.
    """
    n = data.n
    if dm.shape != (grid.m, n) or profile.supported.shape != (grid.m, n):
        raise ValueError(f"density matrix {dm.shape} / support {profile.supported.shape} "
                         f"do not match grid m={grid.m}, n={n}")
    if om.q != data.q:
        raise ValueError(f"outcome model has q={om.q}, data has q={data.q}")
    pred = om.predict_grid(grid.values, data.confounders)
    standard = _row_sum(pred) / n
    pred_feasible = np.take_along_axis(pred, profile.feasible_index, axis=0)
    feasible = _row_sum(pred_feasible) / n
    sup = profile.supported
    count = np.count_nonzero(sup, axis=1)
    defined = count > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        trimming = np.where(defined, _row_sum(pred * sup) / count, np.nan)
    weighted = None
    if weighted_cutoff is not None:
        f = dm.values
        fbar = dm.marginal()[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(fbar > 0, f / fbar, 0.0)
        w = np.where(f > weighted_cutoff, 1.0, ratio)
        weighted = _row_sum(pred * w) / n
    return CurveSet(grid, non_overlap_ratio(profile), standard, feasible, trimming,
                    defined, weighted)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    density_model: object
    density: DensityMatrix
    profile: SupportProfile
    outcome_model: OutcomeModel
    curves: CurveSet


def default_grid(data: Dataset, m: int = 51) -> InterventionGrid:
    lo, hi = float(data.treatment.min()), float(data.treatment.max())
    return make_grid(lo, hi, m)


def _grid_for(config, data, grid):
    if grid is not None:
        return grid
    if config.grid is not None:
        return config.grid.build()
    return default_grid(data)


def _basis(config):
    return Basis(config.outcome_basis, config.outcome_degree)


def run_pipeline(data: Dataset, config: RunConfig, grid: InterventionGrid | None = None,
                 rule_data: Dataset | None = None) -> PipelineResult:
    """Density fit, HDR, outcome fit and plug-in curves in one go.

    ``rule_data``, when given, is used to fit the conditional density that
    defines the data-adaptive rule; the density is still evaluated at the
    units of ``data``, which also carry the outcome fit and the averaging.
    """
    grid = _grid_for(config, data, grid)
    dmodel = fit_cond_density(rule_data if rule_data is not None else data, config.density)
    dm = density_matrix(dmodel, grid, data)
    profile = hdr_thresholds(dm, config.support_level)
    om = fit_outcome(data, config.outcome_family, _basis(config))
    curves = plugin_curves(data, grid, dm, profile, om, config.weighted_cutoff)
    return PipelineResult(dmodel, dm, profile, om, curves)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    bands: dict
    replicates: dict = field(repr=False)
    failed: tuple[int, ...] = ()
    B: int = 0
    split: bool = False


def _replicate(data, config, grid, seed, b, split):
    rng = np.random.default_rng(seed + b)
    idx = rng.integers(0, data.n, size=data.n)
    try:
        if split:
            half = data.n // 2
            rule, est = data.subset(idx[:half]), data.subset(idx[half:])
            res = run_pipeline(est, config, grid, rule_data=rule)
        else:
            res = run_pipeline(data.subset(idx), config, grid)
    except (NumericalError, np.linalg.LinAlgError):
        return None
    return res.curves


def map_ordered(fn, items, threads=1):
    """``[fn(x) for x in items]``, optionally on a thread pool, results in input order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def bootstrap_curves(data: Dataset, config: RunConfig, B: int | None = None,
                     seed: int | None = None, split: bool | None = None,
                     grid: InterventionGrid | None = None, threads: int = 1) -> BootstrapResult:
    """Percentile 95% bands from a nonparametric bootstrap of the whole pipeline.

    Replicate ``b`` resamples rows with ``default_rng(seed + b)``. With
    ``split=True`` the resample is halved: the first half fits the density
    that defines the HDRs, the second half carries the outcome fit and the
    plug-in average. Failed replicates (degenerate fits) are dropped and
    listed; more than 10% failures raises :class:`ReplicateFailureError`.
    """
    B = config.bootstrap.B if B is None else B
    seed = config.bootstrap.seed if seed is None else seed
    split = config.bootstrap.split if split is None else split
    if B < 1:
        raise ValueError("bootstrap needs B >= 1")
    grid = _grid_for(config, data, grid)
    reps = map_ordered(lambda b: _replicate(data, config, grid, seed, b, split), range(B), threads)
    failed = tuple(b for b, r in enumerate(reps) if r is None)
    if len(failed) > MAX_FAIL_FRACTION * B:
        raise ReplicateFailureError(failed, B)
    ok = [r for r in reps if r is not None]
    names = ok[0].available()
    replicates, bands = {}, {}
    for c in names:
        stack = np.vstack([r.curve(c) for r in ok])
        replicates[c] = stack
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lo, hi = np.nanpercentile(stack, [2.5, 97.5], axis=0)
        bands[c] = (lo, hi)
    return BootstrapResult(bands, replicates, failed, B, split)


def undefined_regions(grid: InterventionGrid, defined: np.ndarray):
    """Contiguous grid ranges where ``defined`` is False, as (a_lo, a_hi, count)."""
    out = []
    i, m = 0, grid.m
    while i < m:
        if not defined[i]:
            j = i
            while j + 1 < m and not defined[j + 1]:
                j += 1
            out.append((float(grid.values[i]), float(grid.values[j]), j - i + 1))
            i = j + 1
        else:
            i += 1
    return out
