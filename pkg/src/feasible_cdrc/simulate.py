"""Simulation laws, interventional oracle truths and the Monte Carlo bias harness.

The laws are fixed stand-ins with the qualitative shape of the three
simulation settings:

``1A/1B/1C``  L ~ N(0, 1), A | L ~ N(L, 1); linear, sinusoidal and
              logarithmic outcome means, noise sd 0.1.
``2A/2B``     L ~ Bernoulli(0.5), A | L ~ TruncNormal(2 + 2L, s, [0, 8]),
              s = 1.5 (2A, high overlap) or 0.5 (2B, strata barely overlap);
              Y = 1 + A + 0.5 L + noise.
``3``         L1 ~ Bernoulli(0.4), L2 ~ N(0, 1),
              A | L ~ TruncNormal(2 + L1 + 0.5 L2, 1, [0.2032, 20]),
              logit P(Y = 1 | A, L) = 1.5 - 1.2 log A + 0.5 L1 - 0.3 L2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr
from scipy.stats import truncnorm

from .data import Dataset, DensitySpec, GridSpec, InterventionGrid, RunConfig
from .density import DensityMatrix
from .estimands import map_ordered, run_pipeline
from .exceptions import ConfigError, NumericalError, ReplicateFailureError
from .support import hdr_thresholds

__all__ = [
    "SimLaw",
    "BiasTable",
    "LAW_IDS",
    "get_law",
    "generate",
    "oracle_curves",
    "oracle_truth",
    "monte_carlo_bias",
    "ESTIMANDS",
]

LAW_IDS = ("1A", "1B", "1C", "2A", "2B", "3")
ESTIMANDS = ("standard", "feasible", "trimming")
MAX_FAIL_FRACTION = 0.10
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

_DEFAULTS = {
    "1A": {"outcome": "linear", "noise_sd": 0.1},
    "1B": {"outcome": "sin", "noise_sd": 0.1},
    "1C": {"outcome": "log", "noise_sd": 0.1},
    "2A": {"p_L": 0.5, "mean0": 2.0, "mean_slope": 2.0, "sd": 1.5, "lower": 0.0, "upper": 8.0,
           "noise_sd": 0.1},
    "2B": {"p_L": 0.5, "mean0": 2.0, "mean_slope": 2.0, "sd": 0.5, "lower": 0.0, "upper": 8.0,
           "noise_sd": 0.1},
    "3": {"p_L1": 0.4, "mean0": 2.0, "mean_L1": 1.0, "mean_L2": 0.5, "sd": 1.0,
          "lower": 0.2032, "upper": 20.0,
          "logit": [1.5, -1.2, 0.5, -0.3]},
}

_GRIDS = {"1": GridSpec(-3.0, 3.0, 61), "2": GridSpec(1.5, 4.5, 31), "3": GridSpec(0.0, 6.0, 61)}

# truths draw from their own stream so they never share draws with replicate seeds
_ORACLE_SPAWN_KEY = (1,)


def _normal_pdf(z):
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI)


def _truncnorm_pdf(a, mean, sd, lower, upper):
    z = (a - mean) / sd
    mass = ndtr((upper - mean) / sd) - ndtr((lower - mean) / sd)
    out = _normal_pdf(z) / (sd * mass)
    return np.where((a >= lower) & (a <= upper), out, 0.0)


def _truncnorm_draw(mean, sd, lower, upper, rng):
    return truncnorm.rvs((lower - mean) / sd, (upper - mean) / sd, loc=mean, scale=sd,
                         size=np.shape(mean), random_state=rng)


@dataclass(frozen=True)
class SimLaw:
    """A data-generating process with known conditional density and outcome mean."""

    id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in LAW_IDS:
            raise ConfigError(f"unknown law {self.id!r}; expected one of {LAW_IDS}")
        merged = dict(_DEFAULTS[self.id])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ConfigError(f"unknown parameters for law {self.id}: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @property
    def family(self) -> str:
        return self.id[0]

    @property
    def q(self) -> int:
        return 2 if self.family == "3" else 1

    @property
    def confounder_names(self):
        return ("L1", "L2") if self.family == "3" else ("L",)

    @property
    def outcome_family(self) -> str:
        return "binomial" if self.family == "3" else "gaussian"

    def to_json(self) -> str:
        return json.dumps({"id": self.id, "params": self.params}, indent=2, sort_keys=True)

    # -- components ------------------------------------------------------

    def sample_confounders(self, N, rng):
        p = self.params
        if self.family == "1":
            return rng.standard_normal((N, 1))
        if self.family == "2":
            return (rng.random((N, 1)) < p["p_L"]).astype(float)
        L1 = (rng.random(N) < p["p_L1"]).astype(float)
        L2 = rng.standard_normal(N)
        return np.column_stack([L1, L2])

    def treatment_mean(self, L):
        p = self.params
        if self.family == "1":
            return L[:, 0]
        if self.family == "2":
            return p["mean0"] + p["mean_slope"] * L[:, 0]
        return p["mean0"] + p["mean_L1"] * L[:, 0] + p["mean_L2"] * L[:, 1]

    def sample_treatment(self, L, rng):
        mu = self.treatment_mean(L)
        if self.family == "1":
            return mu + rng.standard_normal(mu.size)
        p = self.params
        return _truncnorm_draw(mu, p["sd"], p["lower"], p["upper"], rng)

    def conditional_pdf(self, a, L):
        """True f(a | l), shape (len(a), len(L))."""
        a = np.asarray(a, dtype=float)[:, None]
        mu = self.treatment_mean(L)[None, :]
        if self.family == "1":
            return _normal_pdf(a - mu)
        p = self.params
        return _truncnorm_pdf(a, mu, p["sd"], p["lower"], p["upper"])

    def outcome_mean(self, a, L):
        """True E(Y | A = a, L) for paired or broadcastable a and L rows."""
        a = np.asarray(a, dtype=float)
        p = self.params
        if self.family == "1":
            l = L[..., 0]
            kind = p["outcome"]
            if kind == "linear":
                return 1.0 + a + l
            if kind == "sin":
                return np.sin(a) + 0.5 * l
            return np.log(np.abs(a) + 0.5) + 0.5 * l
        if self.family == "2":
            return 1.0 + a + 0.5 * L[..., 0]
        b0, bA, b1, b2 = p["logit"]
        with np.errstate(divide="ignore"):
            eta = b0 + bA * np.log(a) + b1 * L[..., 0] + b2 * L[..., 1]
        return expit(eta)

    def sample_outcome(self, a, L, rng):
        mu = self.outcome_mean(a, L)
        if self.family == "3":
            return (rng.random(mu.size) < mu).astype(float)
        return mu + self.params["noise_sd"] * rng.standard_normal(mu.size)

    # -- defaults for the estimation side ---------------------------------

    def default_grid(self) -> GridSpec:
        return _GRIDS[self.family]

    def default_config(self) -> RunConfig:
        if self.family == "1":
            basis = "linear" if self.params["outcome"] == "linear" else "poly"
            return RunConfig(density=DensitySpec("gaussian"), outcome_basis=basis,
                             grid=self.default_grid())
        if self.family == "2":
            return RunConfig(density=DensitySpec("kernel"), outcome_basis="linear",
                             grid=self.default_grid())
        return RunConfig(density=DensitySpec("hazard"), outcome_family="binomial",
                         outcome_basis="poly", grid=self.default_grid())


def get_law(law) -> SimLaw:
    return law if isinstance(law, SimLaw) else SimLaw(str(law).upper())


def generate(law, n: int, seed: int = 0) -> Dataset:
    """n iid draws of (L, A, Y); the draw order is fixed, so output is seed-deterministic."""
    law = get_law(law)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    L = law.sample_confounders(n, rng)
    A = law.sample_treatment(L, rng)
    Y = law.sample_outcome(A, L, rng)
    return Dataset(L, A, Y, law.confounder_names, "A", "Y")


def oracle_curves(law, grid: InterventionGrid, N: int = 100_000, seed: int = 0,
                  alpha: float = 0.95, chunk: int = 20_000) -> dict:
    """True standard, feasible and trimming curves plus the true non-overlap ratio.

    N confounder vectors are drawn from the law; HDRs come from the law's
    true conditional density on ``grid``. Trimming is NaN where no draw is
    supported, with ``trimming_defined`` marking the valid points.
    """
    law = get_law(law)
    if N < 10_000:
        raise ValueError("oracle needs N >= 10_000")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=_ORACLE_SPAWN_KEY))
    L = law.sample_confounders(N, rng)
    m = grid.m
    sum_std = np.zeros(m)
    sum_feas = np.zeros(m)
    sum_trim = np.zeros(m)
    n_sup = np.zeros(m, dtype=np.int64)
    for start in range(0, N, chunk):
        Lc = L[start:start + chunk]
        profile = hdr_thresholds(DensityMatrix(law.conditional_pdf(grid.values, Lc), grid), alpha)
        mu = law.outcome_mean(grid.values[:, None], Lc[None, :, :])
        sum_std += mu.sum(axis=1)
        sum_feas += np.take_along_axis(mu, profile.feasible_index, axis=0).sum(axis=1)
        sum_trim += (mu * profile.supported).sum(axis=1)
        n_sup += np.count_nonzero(profile.supported, axis=1)
    defined = n_sup > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        trimming = np.where(defined, sum_trim / n_sup, np.nan)
    return {
        "standard": sum_std / N,
        "feasible": sum_feas / N,
        "trimming": trimming,
        "trimming_defined": defined,
        "tau": 1.0 - n_sup / N,
    }


def oracle_truth(law, kind: str, grid: InterventionGrid, N: int = 100_000, seed: int = 0,
                 alpha: float = 0.95) -> np.ndarray:
    """One true curve (``kind`` in standard/feasible/trimming); NaN marks undefined."""
    if kind not in ESTIMANDS:
        raise ValueError(f"unknown estimand {kind!r}")
    return oracle_curves(law, grid, N, seed, alpha)[kind]


@dataclass(frozen=True, eq=False)
class BiasTable:
    """Monte Carlo absolute bias per grid point and estimand.

    ``abs_bias[e]`` is NaN where the true curve is undefined, or where no
    successful replicate produced an estimate.
    """

    grid: InterventionGrid
    abs_bias: dict
    n_defined: dict
    truths: dict
    R: int
    n: int
    failed: tuple[int, ...] = ()

    @property
    def n_fail(self) -> int:
        return len(self.failed)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "estimand", "abs_bias", "n_fail"])
            for i, a in enumerate(self.grid.values):
                for e in ESTIMANDS:
                    b = self.abs_bias[e][i]
                    w.writerow([f"{a:.17g}", e, f"{b:.17g}" if np.isfinite(b) else "",
                                self.n_fail])

    def truth_to_csv(self, path):
        write_truth_csv(path, self.grid, self.truths)


def write_truth_csv(path, grid, truths):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "tau", "m_standard", "m_feasible", "m_trimming"])
        for i, a in enumerate(grid.values):
            trim = truths["trimming"][i]
            w.writerow([f"{a:.17g}", f"{truths['tau'][i]:.17g}",
                        f"{truths['standard'][i]:.17g}", f"{truths['feasible'][i]:.17g}",
                        f"{trim:.17g}" if truths["trimming_defined"][i] else ""])


def _mc_replicate(law, n, seed, r, config, grid):
    data = generate(law, n, seed + r)
    try:
        return run_pipeline(data, config, grid).curves
    except (NumericalError, np.linalg.LinAlgError):
        return None


def monte_carlo_bias(law, R: int = 100, n: int = 1000, grid: InterventionGrid | None = None,
                     config: RunConfig | None = None, seed: int = 0, N: int = 100_000,
                     threads: int = 1, truths: dict | None = None) -> BiasTable:
    """Absolute bias (1/R) sum_r |m_hat_r(a) - m(a)| for each estimand.

    Replicate ``r`` analyses ``generate(law, n, seed + r)`` with the full
    pipeline. Failed replicates are skipped and counted; more than 10%
    failures raises :class:`ReplicateFailureError`. For trimming, the mean
    runs over the replicates in which the estimate is defined.
    """
    law = get_law(law)
    if R < 1:
        raise ValueError("R must be >= 1")
    config = config or law.default_config()
    if grid is None:
        grid = (config.grid or law.default_grid()).build()
    if truths is None:
        truths = oracle_curves(law, grid, N, seed, config.support_level)
    reps = map_ordered(lambda r: _mc_replicate(law, n, seed, r, config, grid), range(R), threads)
    failed = tuple(r for r, c in enumerate(reps) if c is None)
    if len(failed) > MAX_FAIL_FRACTION * R:
        raise ReplicateFailureError(failed, R)
    ok = [c for c in reps if c is not None]
    abs_bias, n_defined = {}, {}
    for e in ESTIMANDS:
        est = np.vstack([c.curve(e) for c in ok])
        err = np.abs(est - truths[e][None, :])
        valid = np.isfinite(err)
        cnt = valid.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            b = np.where(cnt > 0, np.where(valid, err, 0.0).sum(axis=0) / cnt, np.nan)
        if e == "trimming":
            b = np.where(truths["trimming_defined"], b, np.nan)
        abs_bias[e] = b
        n_defined[e] = cnt
    return BiasTable(grid, abs_bias, n_defined, truths, R, n, failed)
