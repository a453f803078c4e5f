"""Conditional treatment density estimators f(a | l).

Three interchangeable models share one evaluation interface, ``pdf(a, L)``,
which returns the ``(len(a), len(L))`` matrix of densities:

* ``gaussian`` -- homoscedastic linear-Gaussian regression of A on L;
* ``kernel``   -- Nadaraya-Watson style conditional KDE with Gaussian kernels
  (Aitchison-Aitken match kernel for 0/1 confounders);
* ``hazard``   -- discrete-hazard binning: a pooled logistic model for
  P(A in bin b | A >= bin b, L) with one intercept per bin plus L and
  bin x L terms, turned into a piecewise-constant density.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from ._glm import check_full_rank, irls_logistic, ols
from .data import Dataset, DensitySpec, InterventionGrid
from .exceptions import ConfigError, SingularDesignError

__all__ = [
    "GaussianDensity",
    "KernelDensity",
    "HazardDensity",
    "DensityMatrix",
    "fit_cond_density",
    "eval_density",
    "density_matrix",
    "eval_marginal",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _as_L(L, q):
    L = np.asarray(L, dtype=float)
    if L.ndim == 1:
        L = L.reshape(1, -1) if L.size == q else L[:, None]
    if L.shape[1] != q:
        raise ValueError(f"expected {q} confounders, got {L.shape[1]}")
    return L


def _is_binary(col):
    return bool(np.all((col == 0) | (col == 1)))


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    """A | L ~ Normal(x(L)'beta, sigma^2), x(L) = (1, L_1, ..., L_q)."""

    coef: np.ndarray
    sigma: float
    n: int
    q: int
    treatment_range: tuple[float, float]
    method: str = field(default="gaussian", init=False)

    def mean(self, L):
        L = _as_L(L, self.q)
        return self.coef[0] + L @ self.coef[1:]

    def pdf(self, a, L):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        z = (a[:, None] - self.mean(L)[None, :]) / self.sigma
        return np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / self.sigma

    def params(self):
        return {"coef": self.coef.tolist(), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class KernelDensity:
    """Ratio of a joint (A, L) product-kernel estimate to the L estimate."""

    A: np.ndarray
    L: np.ndarray
    bandwidth: float
    confounder_bandwidths: np.ndarray
    binary: np.ndarray
    lam: float
    n: int
    q: int
    treatment_range: tuple[float, float]
    method: str = field(default="kernel", init=False)

    _chunk = 2048

    def _log_weights(self, L):
        # log prod_k K(l_k - L_jk), shape (len(L), n)
        logw = np.zeros((L.shape[0], self.n))
        for k in range(self.q):
            diff = L[:, k][:, None] - self.L[:, k][None, :]
            if self.binary[k]:
                logw += np.where(diff == 0, np.log1p(-self.lam), np.log(self.lam))
            else:
                u = diff / self.confounder_bandwidths[k]
                logw += -0.5 * u * u
        return logw

    def pdf(self, a, L):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        L = _as_L(L, self.q)
        # repeated confounder rows (binary L) share one column
        uniq, inverse = np.unique(L, axis=0, return_inverse=True)
        u = (a[:, None] - self.A[None, :]) / self.bandwidth
        Ka = np.exp(-0.5 * u * u - _LOG_SQRT_2PI) / self.bandwidth
        out = np.empty((a.size, uniq.shape[0]))
        for start in range(0, uniq.shape[0], self._chunk):
            logw = self._log_weights(uniq[start:start + self._chunk])
            w = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
            out[:, start:start + self._chunk] = Ka @ w.T
        return out[:, inverse.reshape(-1)]

    def params(self):
        return {"bandwidth": self.bandwidth,
                "confounder_bandwidths": self.confounder_bandwidths.tolist(),
                "binary": self.binary.tolist(), "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class HazardDensity:
    """Piecewise-constant density from a pooled discrete-hazard logistic fit.

    The hazard of the last bin is fixed at one (every unit that reaches it
    has its treatment there), so bin masses sum to one for every l.
    """

    edges: np.ndarray
    coef: np.ndarray
    n: int
    q: int
    treatment_range: tuple[float, float]
    iterations: int
    method: str = field(default="hazard", init=False)

    @property
    def n_bins(self):
        return self.edges.size - 1

    @property
    def widths(self):
        return np.diff(self.edges)

    def hazards(self, L):
        """Discrete hazards, shape (len(L), n_bins)."""
        L = _as_L(L, self.q)
        B = self.n_bins
        h = np.ones((L.shape[0], B))
        for b in range(B - 1):
            X = _hazard_design(np.full(L.shape[0], b), L, B)
            h[:, b] = expit(X @ self.coef)
        return h

    def bin_masses(self, L):
        h = self.hazards(L)
        surv = np.cumprod(np.hstack([np.ones((h.shape[0], 1)), 1.0 - h[:, :-1]]), axis=1)
        return h * surv

    def bin_of(self, a):
        """Bin index of each a, or -1 outside [edges[0], edges[-1]]."""
        a = np.asarray(a, dtype=float)
        b = np.searchsorted(self.edges[1:-1], a, side="right")
        return np.where((a < self.edges[0]) | (a > self.edges[-1]), -1, b)

    def pdf(self, a, L):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        dens = self.bin_masses(L) / self.widths  # (n_L, B)
        b = self.bin_of(a)
        out = dens[:, np.maximum(b, 0)].T
        out[b < 0] = 0.0
        return out

    def params(self):
        return {"edges": self.edges.tolist(), "coef": self.coef.tolist(),
                "iterations": self.iterations}


def _hazard_design(b, L, n_bins):
    # one intercept per bin (the last bin is never modelled), then L and bin x L
    s = (b / (n_bins - 1))[:, None]
    return np.hstack([np.eye(n_bins - 1)[b], L, s * L])


def _silverman(x):
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    if not sd > 0:
        return 1.0
    return 1.06 * sd * n ** (-0.2)


def _fit_gaussian(data, params):
    n, q = data.n, data.q
    if n <= q + 1:
        raise SingularDesignError(f"gaussian density needs n > q + 1 (n={n}, q={q})")
    X = np.hstack([np.ones((n, 1)), data.confounders])
    beta = ols(X, data.treatment)
    rss = float(np.sum((data.treatment - X @ beta) ** 2))
    sigma = np.sqrt(rss / (n - q - 1))
    if not sigma > 0:
        raise SingularDesignError("gaussian density: treatment is an exact linear function of L")
    return GaussianDensity(beta, float(sigma), n, q, _range(data))


def _fit_kernel(data, params):
    n, q = data.n, data.q
    L = np.array(data.confounders)
    binary = np.array([_is_binary(L[:, k]) for k in range(q)])
    h_a = float(params.get("bandwidth") or _silverman(data.treatment))
    given = params.get("confounder_bandwidths")
    if given is not None:
        h_l = np.asarray(given, dtype=float)
        if h_l.shape != (q,):
            raise ConfigError(f"confounder_bandwidths needs {q} values")
    else:
        h_l = np.array([_silverman(L[:, k]) for k in range(q)])
    lam = float(params.get("lambda", 0.1))
    if not h_a > 0 or np.any(h_l <= 0) or not 0 < lam < 0.5:
        raise ConfigError("kernel bandwidths must be > 0 and lambda in (0, 0.5)")
    return KernelDensity(np.array(data.treatment), L, h_a, h_l, binary, lam, n, q, _range(data))


def default_hazard_bins(n):
    return max(10, int(np.ceil(n ** (1.0 / 3.0) - 1e-9)))


def _fit_hazard(data, params):
    n, q = data.n, data.q
    B = int(params.get("bins") or default_hazard_bins(n))
    if B < 2:
        raise ConfigError(f"hazard method needs at least 2 bins, got {B}")
    A = data.treatment
    edges = np.unique(np.quantile(A, np.linspace(0.0, 1.0, B + 1)))
    if edges.size < 3:
        raise SingularDesignError("hazard method: treatment has too few distinct values for binning")
    B = edges.size - 1
    bins = np.searchsorted(edges[1:-1], A, side="right")
    # person-bin records for bins 0..B-2; the last bin's hazard is identically 1
    last = np.minimum(bins, B - 2)
    counts = last + 1
    unit = np.repeat(np.arange(n), counts)
    b = np.concatenate([np.arange(c) for c in counts])
    event = (b == bins[unit]).astype(float)
    X = _hazard_design(b, data.confounders[unit], B)
    check_full_rank(X, "hazard design")
    fit = irls_logistic(X, event)
    return HazardDensity(edges, fit.coef, n, q, _range(data), fit.iterations)


def _range(data):
    return float(data.treatment.min()), float(data.treatment.max())


_FITTERS = {"gaussian": _fit_gaussian, "kernel": _fit_kernel, "hazard": _fit_hazard}


def fit_cond_density(data: Dataset, spec: DensitySpec | str | dict = "gaussian"):
    """Fit f(a | l) on ``data`` with the method named in ``spec``.

    ``spec`` may be a :class:`DensitySpec`, a method name, or a mapping with
    ``method`` and ``params`` keys. Fitting is deterministic.
    """
    if isinstance(spec, str):
        spec = DensitySpec(spec)
    elif isinstance(spec, dict):
        spec = DensitySpec(spec.get("method", "gaussian"), spec.get("params", {}))
    return _FITTERS[spec.method](data, spec.params)


def eval_density(model, a: float, l) -> float:
    """f(a | l) for a single treatment value and confounder vector."""
    return float(model.pdf(np.array([a], dtype=float), np.atleast_2d(np.asarray(l, float)))[0, 0])


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Densities f(a_i | l_j) for every grid point i and unit j."""

    values: np.ndarray
    grid: InterventionGrid
    data: Dataset | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.m:
            raise ValueError(f"density matrix must have {self.grid.m} rows, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density matrix entries must be finite and non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def marginal(self):
        """Mixture-of-conditionals marginal density at each grid point."""
        return self.values.mean(axis=1)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", *range(self.values.shape[1])])
            for a, row in zip(self.grid.values, self.values):
                w.writerow([f"{a:.17g}", *(f"{x:.17g}" for x in row)])


def density_matrix(model, grid: InterventionGrid, data: Dataset) -> DensityMatrix:
    """Evaluate ``model`` at every (grid point, unit) pair."""
    if getattr(model, "q", data.q) != data.q:
        raise ValueError(f"model was fit with q={model.q}, data has q={data.q}")
    return DensityMatrix(model.pdf(grid.values, data.confounders), grid, data)


def eval_marginal(model, a, data: Dataset):
    """f(a) estimated as the average of f(a | l_j) over the units of ``data``."""
    vals = model.pdf(np.atleast_1d(np.asarray(a, dtype=float)), data.confounders).mean(axis=1)
    return float(vals[0]) if np.ndim(a) == 0 else vals
