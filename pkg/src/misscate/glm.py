"""Weighted GLM fitters used by the likelihood-based estimators.

Three families: Gaussian identity (closed form), Bernoulli logit and Gamma
log (Newton with step halving).  All fitters accept per-row weights and an
additive offset on the linear predictor, and every iterative step is forced
to be an ascent step of the weighted log-likelihood, which the EM driver
relies on for its monotonicity guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .core import MisscateError

__all__ = ["FitError", "GlmFit", "fit_gaussian", "fit_logistic", "fit_gamma_log"]

_PTOL = 1e-12  # probability clamp inside logs


class FitError(MisscateError):
    """Singular design, separation, or failed convergence in a GLM fit."""


@dataclass(frozen=True)
class GlmFit:
    coef: np.ndarray
    scale: float | None      # sigma for gaussian, shape for gamma, else None
    loglik: float
    converged: bool
    clipped: bool
    n_iter: int
    cov: np.ndarray | None = None


def _check_design(X: np.ndarray, w: np.ndarray) -> None:
    wx = X * np.sqrt(w)[:, None]
    if np.linalg.matrix_rank(wx) < X.shape[1]:
        raise FitError(f"design matrix is rank deficient ({X.shape[1]} columns)")


def _as_weights(w: np.ndarray | None, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise FitError("negative fit weight")
    return w


def fit_gaussian(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    offset: np.ndarray | None = None,
) -> GlmFit:
    """Weighted least squares with MLE variance (divisor sum of weights)."""
    w = _as_weights(weights, len(y))
    ya = y - offset if offset is not None else y
    _check_design(X, w)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], ya * sw, rcond=None)
    resid = ya - X @ coef
    wsum = w.sum()
    if wsum <= 0:
        raise FitError("all fit weights are zero")
    sigma2 = float(w @ resid**2 / wsum)
    sigma2 = max(sigma2, 1e-12)
    ll = -0.5 * float(wsum * np.log(2 * np.pi * sigma2) + w @ resid**2 / sigma2)
    xtwx = X.T @ (X * w[:, None])
    cov = sigma2 * np.linalg.pinv(xtwx)
    return GlmFit(coef, float(np.sqrt(sigma2)), ll, True, False, 1, cov)


def _bernoulli_ll(eta: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    p = np.clip(expit(eta), _PTOL, 1 - _PTOL)
    return float(w @ (y * np.log(p) + (1 - y) * np.log(1 - p)))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    offset: np.ndarray | None = None,
    *,
    start: np.ndarray | None = None,
    clip: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GlmFit:
    """Newton fit of a weighted Bernoulli logit model.

    Each Newton step is halved until the weighted log-likelihood does not
    decrease.  With ``clip`` set, coefficients are projected onto the box
    [-clip, clip] after every step and a hit is reported instead of raised;
    without it, failure to reach the gradient tolerance (separation being the
    usual cause) raises FitError.

    Args:
        X: (n, d) design matrix.
        y: (n,) responses in [0, 1]; fractional responses are allowed.
        weights: optional nonnegative row weights.
        offset: optional additive term on the linear predictor.
        start: optional warm start for the coefficients.
        clip: optional coefficient box bound.
        tol: max-abs gradient at which the fit counts as converged.
        max_iter: Newton iteration cap.
    """
    n, d = X.shape
    w = _as_weights(weights, n)
    off = offset if offset is not None else 0.0
    _check_design(X, w)
    beta = np.zeros(d) if start is None else np.asarray(start, dtype=float).copy()
    if clip is not None:
        beta = np.clip(beta, -clip, clip)
    ll = _bernoulli_ll(X @ beta + off, y, w)
    clipped = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta + off
        p = expit(eta)
        grad = X.T @ (w * (y - p))
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        h = p * (1 - p)
        # Floor the curvature so the step stays finite under separation.
        hess = X.T @ (X * (w * np.maximum(h, 1e-10))[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        alpha = 1.0
        for _ in range(40):
            cand = beta + alpha * step
            if clip is not None:
                cand = np.clip(cand, -clip, clip)
            cand_ll = _bernoulli_ll(X @ cand + off, y, w)
            if cand_ll >= ll - 1e-12:
                break
            alpha *= 0.5
        else:
            converged = True  # no ascent direction left, already at optimum
            break
        moved = float(np.max(np.abs(cand - beta)))
        beta, ll = cand, cand_ll
        if clip is not None and np.any(np.abs(beta) >= clip - 1e-12):
            clipped = True
            if moved < 1e-12:
                break
        if moved < 1e-13:
            converged = True
            break
    if clip is None:
        # Separation drives the clamped gradient to zero at huge coefficients,
        # so a plain convergence check would happily accept a divergent fit.
        if np.max(np.abs(beta)) > 50.0:
            raise FitError("logit fit diverged (complete or quasi separation)")
        if not converged:
            raise FitError(
                f"logit fit did not converge in {max_iter} iterations "
                "(possible separation)"
            )
    p = expit(X @ beta + off)
    h = np.maximum(p * (1 - p), 1e-10)
    cov = np.linalg.pinv(X.T @ (X * (w * h)[:, None]))
    return GlmFit(beta, None, ll, converged, clipped, it, cov)


def _gamma_ll(eta: np.ndarray, y: np.ndarray, w: np.ndarray, shape: float) -> float:
    # Parametrized by mean mu = exp(eta) and shape k: E=mu, Var=mu^2/k.
    return float(
        w
        @ (
            shape * (np.log(shape) - eta)
            + (shape - 1) * np.log(y)
            - shape * y * np.exp(-eta)
            - gammaln(shape)
        )
    )


def fit_gamma_log(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    *,
    start: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GlmFit:
    """Gamma regression with log link; shape by the Pearson moment estimator.

    The mean coefficients do not depend on the shape (the score factorizes),
    so the fit alternates nothing: Newton on the quasi-likelihood, then a
    one-shot dispersion estimate.
    """
    n, d = X.shape
    if np.any(y <= 0):
        raise FitError("gamma response must be strictly positive")
    w = _as_weights(weights, n)
    _check_design(X, w)
    if start is None:
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(X * sw[:, None], np.log(y) * sw, rcond=None)
    else:
        beta = np.asarray(start, dtype=float).copy()

    def score_ll(b: np.ndarray) -> tuple[np.ndarray, float]:
        eta = X @ b
        grad = X.T @ (w * (y * np.exp(-eta) - 1))
        return grad, _gamma_ll(eta, y, w, 1.0)

    grad, ll = score_ll(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        hess = X.T @ (X * w[:, None])  # Fisher weight is constant under log link
        step = np.linalg.solve(hess, grad)
        alpha = 1.0
        for _ in range(40):
            cand = beta + alpha * step
            cgrad, cll = score_ll(cand)
            if cll >= ll - 1e-12:
                break
            alpha *= 0.5
        else:
            converged = True
            break
        beta, grad, ll = cand, cgrad, cll
    if not converged:
        raise FitError(f"gamma fit did not converge in {max_iter} iterations")
    mu = np.exp(X @ beta)
    wsum = w.sum()
    dof = max(wsum - d, 1.0)
    pearson = float(w @ ((y - mu) / mu) ** 2) / dof
    shape = 1.0 / max(pearson, 1e-12)
    ll = _gamma_ll(X @ beta, y, w, shape)
    cov = np.linalg.pinv(X.T @ (X * w[:, None])) / shape
    return GlmFit(beta, shape, ll, converged, False, it, cov)
