"""Per-unit highest-density-region support on the intervention grid.

The HDR of unit j at level alpha is found by sorting its grid cells by density,
highest first, and accumulating normalized cell mass until alpha is reached.
The density of the last cell taken is the unit's threshold; every cell with
density at or above it is supported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import InterventionGrid
from .density import DensityMatrix
from .exceptions import SupportError

__all__ = [
    "SupportProfile",
    "NonOverlapCurve",
    "hdr_thresholds",
    "non_overlap_ratio",
    "nearest_feasible",
    "assign_interventions",
    "write_tau_csv",
]

# slack on the cumulative-mass comparison, absorbs summation rounding
_MASS_TOL = 1e-12
# relative slack (in grid steps) when comparing distances for the low tie-break
_TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SupportProfile:
    thresholds: np.ndarray
    densities: DensityMatrix
    support_level: float
    supported: np.ndarray

    @property
    def grid(self) -> InterventionGrid:
        return self.densities.grid

    @property
    def n(self) -> int:
        return self.supported.shape[1]

    @property
    def m(self) -> int:
        return self.supported.shape[0]

    @cached_property
    def feasible_index(self) -> np.ndarray:
        """(m, n) index of the supported grid point nearest to each a_i, per unit."""
        m, n = self.supported.shape
        rows = np.arange(m)[:, None]
        prev = np.maximum.accumulate(np.where(self.supported, rows, -1), axis=0)
        nxt = np.minimum.accumulate(np.where(self.supported, rows, m)[::-1], axis=0)[::-1]
        a = self.grid.values
        d_prev = np.where(prev >= 0, a[:, None] - a[np.clip(prev, 0, m - 1)], np.inf)
        d_next = np.where(nxt < m, a[np.clip(nxt, 0, m - 1)] - a[:, None], np.inf)
        take_prev = d_prev <= d_next + _TIE_TOL * self.grid.step
        idx = np.where(take_prev, prev, nxt)
        idx.flags.writeable = False
        return idx

    def supported_mass(self) -> np.ndarray:
        """Normalized grid mass of each unit's supported set."""
        mass = self.densities.values * self.grid.cell_widths[:, None]
        return (mass * self.supported).sum(axis=0) / mass.sum(axis=0)


@dataclass(frozen=True, eq=False)
class NonOverlapCurve:
    grid: InterventionGrid
    tau: np.ndarray
    support_level: float

    def to_csv(self, path):
        write_tau_csv(path, self.grid, {self.support_level: self.tau}, single=True)


def hdr_thresholds(dm: DensityMatrix, alpha: float) -> SupportProfile:
    """Per-unit HDR thresholds and the supported-cell matrix.

    Raises
    ------
    SupportError
        If a unit's density is zero on the whole grid.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"support level must lie in (0, 1), got {alpha}")
    f = dm.values
    mass = f * dm.grid.cell_widths[:, None]
    total = mass.sum(axis=0)
    empty = np.flatnonzero(~(total > 0))
    if empty.size:
        raise SupportError(int(empty[0]))
    order = np.argsort(-f, axis=0, kind="stable")
    cum = np.cumsum(np.take_along_axis(mass, order, axis=0) / total, axis=0)
    reached = cum >= alpha - _MASS_TOL
    k = np.where(reached.any(axis=0), reached.argmax(axis=0), f.shape[0] - 1)
    cols = np.arange(f.shape[1])
    thresholds = f[order[k, cols], cols]
    supported = f >= thresholds[None, :]
    thresholds.flags.writeable = False
    supported.flags.writeable = False
    return SupportProfile(thresholds, dm, float(alpha), supported)


def non_overlap_ratio(profile: SupportProfile) -> NonOverlapCurve:
    """Fraction of units for which each grid point lies outside their HDR."""
    unsupported = profile.n - np.count_nonzero(profile.supported, axis=1)
    return NonOverlapCurve(profile.grid, unsupported / profile.n, profile.support_level)


def _nearest_index(grid, a):
    vals = grid.values
    i = int(np.searchsorted(vals, a))
    if i == 0:
        return 0
    if i >= vals.size:
        return vals.size - 1
    # tie goes to the lower grid point
    return i - 1 if a - vals[i - 1] <= vals[i] - a + _TIE_TOL * grid.step else i


def nearest_feasible(a: float, profile: SupportProfile, unit: int) -> float:
    """Return ``a`` if it is supported for ``unit``, else the closest supported grid value.

    A value off the grid counts as supported when its nearest grid cell is.
    Equidistant candidates resolve to the smaller value.
    """
    sup = profile.supported[:, unit]
    if not sup.any():
        raise SupportError(unit, f"unit {unit} has an empty supported set")
    if sup[_nearest_index(profile.grid, a)]:
        return a
    cand = profile.grid.values[sup]
    d = np.abs(cand - a)
    return float(cand[np.argmax(d <= d.min() + _TIE_TOL * profile.grid.step)])


def assign_interventions(a_i: float, profile: SupportProfile) -> np.ndarray:
    """Data-adaptive intervention for every unit at grid value ``a_i``.

    Units for which ``a_i`` is supported keep it; the others get their nearest
    supported grid value.
    """
    vals = profile.grid.values
    hit = np.flatnonzero(np.isclose(vals, a_i, rtol=0, atol=_TIE_TOL * profile.grid.step))
    if hit.size != 1:
        raise ValueError(f"{a_i} is not a grid point")
    i = int(hit[0])
    out = vals[profile.feasible_index[i]]
    out[profile.supported[i]] = a_i
    return out


def write_tau_csv(path, grid: InterventionGrid, taus: dict, single=False):
    """Write non-overlap ratios; one ``tau`` column, or ``tau_<alpha>`` per level."""
    levels = list(taus)
    names = ["tau"] if single else [f"tau_{lvl:g}" for lvl in levels]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", *names])
        for i, a in enumerate(grid.values):
            w.writerow([f"{a:.17g}", *(f"{taus[lvl][i]:.17g}" for lvl in levels)])
