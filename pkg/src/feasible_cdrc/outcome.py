"""Outcome regression E(Y | A, L) for the plug-in estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._glm import check_full_rank, irls_logistic, ols
from .data import OUTCOME_BASES, OUTCOME_FAMILIES, Dataset
from .exceptions import ConfigError, DataError, SeparationError

__all__ = ["Basis", "OutcomeModel", "fit_outcome", "predict"]

SEPARATION_COEF = 30.0
_P_MIN = 1e-300
_P_MAX = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Basis:
    """Which transforms of (A, L) enter the regression.

    ``linear``       (1, A, L)
    ``poly``         (1, A, ..., A^degree, L)
    ``interaction``  (1, A, L, A*L)
    """

    name: str = "linear"
    degree: int = 3

    def __post_init__(self):
        if self.name not in OUTCOME_BASES:
            raise ConfigError(f"unknown outcome basis {self.name!r}")
        if self.name == "poly" and not 1 <= self.degree <= 3:
            raise ConfigError("polynomial degree must be 1, 2 or 3")

    def design(self, a, L):
        a = np.asarray(a, dtype=float)[:, None]
        L = np.asarray(L, dtype=float)
        cols = [np.ones_like(a), a]
        if self.name == "poly":
            cols += [a ** k for k in range(2, self.degree + 1)]
        cols.append(L)
        if self.name == "interaction":
            cols.append(a * L)
        return np.hstack(cols)

    def column_names(self, confounders):
        names = ["1", "A"]
        if self.name == "poly":
            names += [f"A^{k}" for k in range(2, self.degree + 1)]
        names += list(confounders)
        if self.name == "interaction":
            names += [f"A*{c}" for c in confounders]
        return names


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    family: str
    basis: Basis
    coef: np.ndarray
    deviance: float
    iterations: int
    q: int
    column_names: tuple[str, ...] = ()

    def linear_predictor(self, a, L):
        return self.basis.design(a, L) @ self.coef

    def _link_inverse(self, eta):
        if self.family == "binomial":
            return np.clip(expit(eta), _P_MIN, _P_MAX)
        return eta

    def predict(self, a, L):
        """Predictions at paired treatment values and confounder rows."""
        return self._link_inverse(self.linear_predictor(a, L))

    def predict_grid(self, a_grid, L):
        """(m, n) matrix of predictions at every (grid value, unit) pair."""
        a_grid = np.asarray(a_grid, dtype=float)
        L = np.asarray(L, dtype=float)
        m, n = a_grid.size, L.shape[0]
        eta = self.linear_predictor(np.repeat(a_grid, n), np.tile(L, (m, 1)))
        return self._link_inverse(eta).reshape(m, n)

    def to_dict(self):
        return {
            "family": self.family,
            "basis": {"name": self.basis.name, "degree": self.basis.degree},
            "columns": list(self.column_names),
            "coef": [float(c) for c in self.coef],
            "deviance": self.deviance,
            "iterations": self.iterations,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def fit_outcome(data: Dataset, family: str = "gaussian", basis: Basis | str = "linear") -> OutcomeModel:
    """Fit E(Y | A, L) by least squares (gaussian) or logistic IRLS (binomial).

    Raises
    ------
    SingularDesignError
        Collinear basis columns.
    ConvergenceError
        IRLS did not converge.
    SeparationError
        Binomial fit converged with some |coefficient| above 30.
    """
    if family not in OUTCOME_FAMILIES:
        raise ConfigError(f"unknown outcome family {family!r}")
    if isinstance(basis, str):
        basis = Basis(basis)
    X = basis.design(data.treatment, data.confounders)
    names = tuple(basis.column_names(data.confounder_names))
    if family == "gaussian":
        beta = ols(X, data.outcome)
        rss = float(np.sum((data.outcome - X @ beta) ** 2))
        return OutcomeModel(family, basis, beta, rss, 1, data.q, names)
    data.check_binary_outcome()
    check_full_rank(X, "outcome design")
    fit = irls_logistic(X, data.outcome)
    big = np.flatnonzero(np.abs(fit.coef) > SEPARATION_COEF)
    if big.size:
        raise SeparationError(
            "complete separation suspected: |coef| > 30 for "
            + ", ".join(names[k] for k in big))
    return OutcomeModel(family, basis, fit.coef, fit.deviance, fit.iterations, data.q, names)


def predict(model: OutcomeModel, a: float, l) -> float:
    """Prediction at a single treatment value and confounder vector."""
    l = np.atleast_2d(np.asarray(l, dtype=float))
    if l.shape[1] != model.q:
        raise DataError(f"expected {model.q} confounders, got {l.shape[1]}")
    return float(model.predict(np.array([a], dtype=float), l)[0])
