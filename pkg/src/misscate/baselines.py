"""Reference estimators that ignore the missingness mechanism.

Three fits of the same outcome regression: on the latent data (oracle, needs
the pre-masking dataset), on complete cases only, and on the missing-indicator
augmentation that keeps rows with missing covariates by zero-filling them and
adding one indicator column per covariate.  On fully observed data all three
coincide.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import CateEstimate, Dataset, MisscateError, as_columns
from .em import Family, OutcomeModel, design_matrix
from .glm import FitError, fit_gamma_log, fit_gaussian, fit_logistic

__all__ = ["oracle_fit", "cca_fit", "miss_indicator_fit"]


def _fit_family(
    U: np.ndarray, y: np.ndarray, family: Family
) -> tuple[np.ndarray, np.ndarray | None]:
    """Fit one family on a prepared design; returns (beta, magnitude_beta)."""
    if U.shape[0] <= U.shape[1]:
        raise FitError(
            f"{U.shape[0]} usable rows cannot identify {U.shape[1]} coefficients"
        )
    if family is Family.LOGISTIC:
        return fit_logistic(U, y, tol=1e-8).coef, None
    if family is Family.GAUSSIAN:
        return fit_gaussian(U, y).coef, None
    pos = y > 0
    pfit = fit_logistic(U, pos.astype(float), tol=1e-8)
    if int(pos.sum()) <= U.shape[1]:
        raise FitError("too few positive outcomes for the magnitude part")
    mfit = fit_gamma_log(U[pos], y[pos])
    return pfit.coef, mfit.coef


def _predict(u: np.ndarray, beta: np.ndarray, mag: np.ndarray | None, family: Family) -> float:
    eta = float(u @ beta)
    if family is Family.LOGISTIC:
        return float(expit(eta))
    if family is Family.GAUSSIAN:
        return eta
    return float(expit(eta)) * float(np.exp(u @ mag))


def _query_row(outcome: OutcomeModel, x: Sequence[float], t: float) -> np.ndarray:
    xr = np.asarray([list(x)], dtype=float)
    return design_matrix(outcome.design, xr, np.asarray([float(t)]))[0]


def _plain_fit(
    d: Dataset,
    outcome: OutcomeModel,
    x: Sequence[float],
    t1: float,
    t0: float,
    mask: np.ndarray,
    estimator: str,
) -> CateEstimate:
    cols = as_columns(d)
    if not np.any(mask):
        raise FitError("no usable rows")
    U = design_matrix(outcome.design, cols.x[mask], cols.t[mask])
    beta, mag = _fit_family(U, cols.y[mask], outcome.family)
    u1 = _query_row(outcome, x, t1)
    u0 = _query_row(outcome, x, t0)
    tau = _predict(u1, beta, mag, outcome.family) - _predict(
        u0, beta, mag, outcome.family
    )
    details = {"beta": tuple(beta), "n_used": int(mask.sum())}
    if mag is not None:
        details["magnitude_beta"] = tuple(mag)
    return CateEstimate(
        tau, float(t1), float(t0), tuple(float(v) for v in x), estimator,
        details=details,
    )


def oracle_fit(
    latent, outcome: OutcomeModel, x: Sequence[float], t1: float, t0: float
) -> CateEstimate:
    """Outcome fit on the latent, pre-masking data; a benchmark, not an estimator.

    Accepts either the latent Dataset itself or a simulation result carrying
    one in its ``latent`` attribute.
    """
    latent = getattr(latent, "latent", latent)
    cols = as_columns(latent)
    full = (
        (cols.ry == 1) & (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    )
    if not np.all(full):
        raise MisscateError("oracle fit needs fully observed data")
    return _plain_fit(latent, outcome, x, t1, t0, full, "oracle")


def cca_fit(
    d: Dataset, outcome: OutcomeModel, x: Sequence[float], t1: float, t0: float
) -> CateEstimate:
    """Outcome fit on rows where everything is observed."""
    cols = as_columns(d)
    cc = (cols.ry == 1) & (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    return _plain_fit(d, outcome, x, t1, t0, cc, "cca")


def miss_indicator_fit(
    d: Dataset, outcome: OutcomeModel, x: Sequence[float], t1: float, t0: float
) -> CateEstimate:
    """Zero-fill missing covariates and add their missingness indicators.

    Rows still need treatment and outcome observed.  Indicator columns enter
    as main effects; ones that are identically zero on the usable rows are
    dropped (noted in details).  The query profile sets all indicators to
    zero, so prediction uses only the base design coefficients.
    """
    cols = as_columns(d)
    mask = (cols.ry == 1) & (cols.rt == 1)
    if not np.any(mask):
        raise FitError("no rows with observed treatment and outcome")
    x_fill = np.where(cols.rx[mask] == 1, np.nan_to_num(cols.x[mask], nan=0.0), 0.0)
    t_m, y_m = cols.t[mask], cols.y[mask]
    base = design_matrix(outcome.design, x_fill, t_m)
    indicators = (cols.rx[mask] == 0).astype(float)
    keep = [j for j in range(d.p) if indicators[:, j].any()]
    dropped = [f"m{j + 1}" for j in range(d.p) if j not in keep]
    U = np.column_stack([base, indicators[:, keep]]) if keep else base
    beta, mag = _fit_family(U, y_m, outcome.family)
    k = base.shape[1]
    u1 = _query_row(outcome, x, t1)
    u0 = _query_row(outcome, x, t0)
    tau = _predict(u1, beta[:k], None if mag is None else mag[:k], outcome.family)
    tau -= _predict(u0, beta[:k], None if mag is None else mag[:k], outcome.family)
    details = {
        "beta": tuple(beta),
        "n_used": int(mask.sum()),
        "indicator_columns": [f"m{j + 1}" for j in keep],
    }
    if dropped:
        details["dropped_indicators"] = dropped
    if mag is not None:
        details["magnitude_beta"] = tuple(mag)
    return CateEstimate(
        tau, float(t1), float(t0), tuple(float(v) for v in x), "miss-ind",
        details=details,
    )
