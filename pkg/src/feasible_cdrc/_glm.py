"""Least squares and logistic IRLS used by the density and outcome modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import ConvergenceError, SingularDesignError

RIDGE_JITTER = 1e-10
MAX_ITER = 100
COEF_TOL = 1e-8
# relative singular-value cutoff on the column-scaled design
RANK_TOL = 1e-9


def _column_scale(X):
    scale = np.sqrt(np.einsum("ij,ij->j", X, X))
    if np.any(scale == 0):
        raise SingularDesignError(f"design column(s) {np.flatnonzero(scale == 0).tolist()} are all zero")
    return scale


def check_full_rank(X, what="design matrix"):
    """Raise :class:`SingularDesignError` if ``X`` has (near-)collinear columns."""
    if X.shape[0] < X.shape[1]:
        raise SingularDesignError(f"{what} has {X.shape[0]} rows for {X.shape[1]} columns")
    sv = np.linalg.svd(X / _column_scale(X), compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise SingularDesignError(f"{what} is rank deficient (collinear columns)")


def _solve_normal(XtWX, XtWz):
    p = XtWX.shape[0]
    return np.linalg.solve(XtWX + RIDGE_JITTER * np.eye(p), XtWz)


def ols(X, y):
    """Least-squares coefficients through the jittered normal equations.

    Columns are rescaled to unit norm before solving so the jitter acts the
    same regardless of the units of each regressor. One refinement step on
    the residual removes the first-order shrinkage the jitter introduces.
    """
    check_full_rank(X)
    scale = _column_scale(X)
    Xs = X / scale
    XtX = Xs.T @ Xs
    beta = _solve_normal(XtX, Xs.T @ y)
    beta = beta + _solve_normal(XtX, Xs.T @ (y - Xs @ beta))
    return beta / scale


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    deviance: float
    iterations: int


def _binomial_deviance(y, eta, w=None):
    # -2 log-likelihood, computed stably from the linear predictor
    ll = y * eta - np.logaddexp(0.0, eta)
    if w is not None:
        ll = w * ll
    return -2.0 * float(np.sum(ll))


def irls_logistic(X, y, weights=None, max_iter=MAX_ITER, tol=COEF_TOL):
    """Fit a logistic regression by iteratively reweighted least squares.

    Step-halving is applied whenever a Newton step increases the deviance.
    Convergence is declared when the largest absolute coefficient change
    drops below ``tol``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
        Responses in [0, 1].
    weights : ndarray, shape (n,), optional
        Non-negative case weights.

    Returns
    -------
    LogisticFit
    """
    check_full_rank(X)
    scale = _column_scale(X)
    Xs = X / scale
    w_case = np.ones(len(y)) if weights is None else np.asarray(weights, float)
    beta = np.zeros(X.shape[1])
    eta = Xs @ beta
    dev = _binomial_deviance(y, eta, w_case)
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        var = np.clip(mu * (1.0 - mu), 1e-12, None)
        W = w_case * var
        z = eta + (y - mu) / var
        XtW = Xs.T * W
        new = _solve_normal(XtW @ Xs, XtW @ z)
        step = new - beta
        new_dev = _binomial_deviance(y, Xs @ new, w_case)
        halvings = 0
        while new_dev > dev + 1e-12 * (1.0 + abs(dev)) and halvings < 30:
            step /= 2.0
            new = beta + step
            new_dev = _binomial_deviance(y, Xs @ new, w_case)
            halvings += 1
        delta = np.max(np.abs(step / scale))
        beta, dev = new, new_dev
        eta = Xs @ beta
        if delta < tol:
            return LogisticFit(beta / scale, dev, it)
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations "
                           f"(last max |delta coef| = {delta:.3g})")
