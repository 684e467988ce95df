"""Likelihood-based effect estimation with nonignorable outcome missingness.

The observed-data likelihood couples an outcome regression (logit, linear
Gaussian, or two-part positivity-times-Gamma) with a logistic response model
whose design omits the variable barred by the identifying mechanism.  Missing
outcomes are integrated out exactly when the outcome is binary, or by
fractional imputation with a frozen proposal otherwise, and both parameter
blocks are updated by weighted GLM fits inside an EM loop whose every step
is an ascent step of the (Monte Carlo) observed-data log-likelihood.

A sensitivity offset, delta times a fixed function of the barred variable,
can be added to the response logit; delta = 0 reproduces the baseline fit
bit for bit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import (
    CateEstimate,
    Columns,
    ConfigError,
    Dataset,
    Mechanism,
    MisscateError,
    MissingnessAssumption,
    Unit,
    VariableKind,
    as_columns,
)
from .glm import FitError, GlmFit, fit_gamma_log, fit_gaussian, fit_logistic

__all__ = [
    "Family",
    "OffsetTerm",
    "OutcomeModel",
    "MissingnessModel",
    "EmConfig",
    "EmResult",
    "ImputationSet",
    "DegeneratePosteriorError",
    "EmMonotonicityError",
    "design_matrix",
    "default_outcome_design",
    "default_missingness_design",
    "fit_initial_outcome",
    "e_step_exact_discrete",
    "fractional_impute",
    "fit_em",
    "model_mean",
    "estimate_cate_param",
]

_LAMBDA_CLIP = 15.0
_TERM_RE = re.compile(r"^(1|t|y|x(\d+)|t:x(\d+))$")


class DegeneratePosteriorError(MisscateError):
    """Every outcome level got zero posterior mass for some unit."""


class EmMonotonicityError(MisscateError):
    """Exact-mode log-likelihood decreased beyond numerical slack."""


class Family(Enum):
    LOGISTIC = "logistic"
    GAUSSIAN = "gaussian"
    TWO_PART = "two-part"


class OffsetTerm(Enum):
    """Which fixed function of the barred variable the offset multiplies."""

    NONE = "none"
    OUTCOME = "outcome"        # y itself, or the positivity indicator if two-part
    TREATMENT = "treatment"
    IDENTIFYING = "identifying"  # indicator of the non-reference level of X^id


@dataclass(frozen=True)
class OutcomeModel:
    """Outcome regression spec plus, once fitted, its parameters.

    design holds terms over (x, t): "1", "t", "x1".."xp", "t:x1".."t:xp".
    For the two-part family the same design serves both the positivity logit
    (coefficients in ``beta``) and the log-mean of the positive part
    (coefficients in ``magnitude_beta``, Gamma shape in ``scale``); for the
    Gaussian family ``scale`` is the error standard deviation.
    """

    family: Family
    design: tuple[str, ...]
    beta: tuple[float, ...] | None = None
    scale: float | None = None
    magnitude_beta: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        for term in self.design:
            if term == "y" or not _TERM_RE.match(term):
                raise ConfigError(f"invalid outcome design term {term!r}")


@dataclass(frozen=True)
class MissingnessModel:
    """Logistic outcome-response model under one identifying mechanism.

    design holds terms over (x, t, y); the term "y" refers to the outcome
    (the positivity indicator when fitting a two-part outcome).  The design
    must omit the barred variable: no "t" terms under treatment independence,
    no "y" under outcome independence, no terms in the identifying covariate
    under covariate independence.  ``offset_delta`` times the offset term's
    value is added to the logit without being estimated.
    """

    assumption: MissingnessAssumption
    design: tuple[str, ...]
    lam: tuple[float, ...] | None = None
    offset_delta: float = 0.0
    offset: OffsetTerm = OffsetTerm.NONE

    def __post_init__(self) -> None:
        kind = self.assumption.kind
        if kind not in (
            Mechanism.OUTCOME_INDEPENDENT,
            Mechanism.TREATMENT_INDEPENDENT,
            Mechanism.COVARIATE_INDEPENDENT,
        ):
            raise ConfigError("response model requires one identifying mechanism")
        for term in self.design:
            if not _TERM_RE.match(term):
                raise ConfigError(f"invalid response design term {term!r}")
            if kind is Mechanism.OUTCOME_INDEPENDENT and term == "y":
                raise ConfigError("outcome-independent response bars the term 'y'")
            if kind is Mechanism.TREATMENT_INDEPENDENT and (
                term == "t" or term.startswith("t:")
            ):
                raise ConfigError("treatment-independent response bars 't' terms")


def validate_missingness_design(miss: MissingnessModel, p: int) -> None:
    """Mechanism checks that need the covariate dimension (identifying index)."""
    if miss.assumption.kind is Mechanism.COVARIATE_INDEPENDENT:
        idx = miss.assumption.identifying_index(p)
        barred = {f"x{idx + 1}", f"t:x{idx + 1}"}
        hit = [t for t in miss.design if t in barred]
        if hit:
            raise ConfigError(
                f"covariate-independent response bars terms {sorted(hit)}"
            )


@dataclass(frozen=True)
class EmConfig:
    imputations: int = 50
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.imputations < 2:
            raise ConfigError("at least 2 imputations per missing outcome")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")


@dataclass(frozen=True)
class EmResult:
    outcome: OutcomeModel
    missingness: MissingnessModel
    trace: tuple[float, ...]
    converged: bool
    n_iter: int
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ImputationSet:
    unit_indices: tuple[int, ...]  # positions in d.units
    draws: np.ndarray              # (m, M)
    weights: np.ndarray            # (m, M), rows sum to one
    ess: np.ndarray                # (m,) effective sample sizes


# ============================================================
# Designs
# ============================================================


def design_matrix(
    terms: Sequence[str],
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluate design terms columnwise; covariate tokens are 1-based (x1..xp)."""
    x = np.atleast_2d(x)
    n = len(t)
    cols = []
    for term in terms:
        m = _TERM_RE.match(term)
        if not m:
            raise ConfigError(f"invalid design term {term!r}")
        if term == "1":
            cols.append(np.ones(n))
        elif term == "t":
            cols.append(t)
        elif term == "y":
            if y is None:
                raise ConfigError("term 'y' is not available in this design")
            cols.append(y)
        elif m.group(2) is not None:
            j = int(m.group(2)) - 1
            if not 0 <= j < x.shape[1]:
                raise ConfigError(f"term {term!r} exceeds covariate dimension")
            cols.append(x[:, j])
        else:
            j = int(m.group(3)) - 1
            if not 0 <= j < x.shape[1]:
                raise ConfigError(f"term {term!r} exceeds covariate dimension")
            cols.append(t * x[:, j])
    return np.column_stack(cols)


def default_outcome_design(p: int) -> tuple[str, ...]:
    return (
        ("1", "t")
        + tuple(f"x{j + 1}" for j in range(p))
        + tuple(f"t:x{j + 1}" for j in range(p))
    )


def default_missingness_design(
    assumption: MissingnessAssumption, p: int
) -> tuple[str, ...]:
    """Intercept plus main effects of everything the mechanism allows."""
    kind = assumption.kind
    if kind is Mechanism.OUTCOME_INDEPENDENT:
        return ("1",) + tuple(f"x{j + 1}" for j in range(p)) + ("t",)
    if kind is Mechanism.TREATMENT_INDEPENDENT:
        return ("1",) + tuple(f"x{j + 1}" for j in range(p)) + ("y",)
    if kind is Mechanism.COVARIATE_INDEPENDENT:
        idx = assumption.identifying_index(p)
        rest = tuple(f"x{j + 1}" for j in range(p) if j != idx)
        return ("1", "t") + rest + ("y",)
    raise ConfigError("no default response design for this mechanism")


def _offset_values(
    miss: MissingnessModel,
    family: Family,
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray | None,
    p: int,
) -> np.ndarray:
    """delta times the offset term, evaluated rowwise."""
    n = len(t)
    if miss.offset_delta == 0.0 or miss.offset is OffsetTerm.NONE:
        return np.zeros(n)
    if miss.offset is OffsetTerm.TREATMENT:
        vals = t
    elif miss.offset is OffsetTerm.OUTCOME:
        if y is None:
            raise ConfigError("outcome offset needs outcome values")
        vals = (y > 0).astype(float) if family is Family.TWO_PART else y
    else:
        idx = miss.assumption.identifying_index(p)
        col = np.atleast_2d(x)[:, idx]
        if not np.all(np.isin(col[~np.isnan(col)], (0.0, 1.0))):
            raise ConfigError(
                "identifying-covariate offset requires a binary covariate"
            )
        vals = (col != 0.0).astype(float)
    return miss.offset_delta * vals


# ============================================================
# Initial fits
# ============================================================


def _subset_arrays(d: Dataset) -> tuple[Columns, np.ndarray]:
    cols = as_columns(d)
    sub = (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    return cols, sub


def fit_initial_outcome(d: Dataset, model: OutcomeModel) -> OutcomeModel:
    """Complete-case MLE of the outcome model (gradient tolerance 1e-8)."""
    cols, sub = _subset_arrays(d)
    cc = sub & (cols.ry == 1)
    if not np.any(cc):
        raise FitError("no complete cases for the initial outcome fit")
    x, t, y = cols.x[cc], cols.t[cc], cols.y[cc]
    U = design_matrix(model.design, x, t)
    if U.shape[0] <= U.shape[1]:
        raise FitError(
            f"{U.shape[0]} complete cases cannot identify {U.shape[1]} coefficients"
        )
    if model.family is Family.LOGISTIC:
        fit = fit_logistic(U, y, tol=1e-8)
        return replace(model, beta=tuple(fit.coef), scale=None)
    if model.family is Family.GAUSSIAN:
        fit = fit_gaussian(U, y)
        return replace(model, beta=tuple(fit.coef), scale=fit.scale)
    dpos = (y > 0).astype(float)
    pfit = fit_logistic(U, dpos, tol=1e-8)
    pos = y > 0
    if pos.sum() <= U.shape[1]:
        raise FitError("too few positive outcomes for the magnitude part")
    mfit = fit_gamma_log(U[pos], y[pos])
    return replace(
        model,
        beta=tuple(pfit.coef),
        magnitude_beta=tuple(mfit.coef),
        scale=mfit.scale,
    )


def model_mean(outcome: OutcomeModel, x: Sequence[float], t: float) -> float:
    """Fitted E(Y | x, t) at one covariate profile."""
    if outcome.beta is None:
        raise MisscateError("outcome model has no fitted coefficients")
    xr = np.asarray([list(x)], dtype=float)
    tr = np.asarray([float(t)])
    u = design_matrix(outcome.design, xr, tr)[0]
    eta = float(u @ np.asarray(outcome.beta))
    if outcome.family is Family.LOGISTIC:
        return float(expit(eta))
    if outcome.family is Family.GAUSSIAN:
        return eta
    if outcome.magnitude_beta is None:
        raise MisscateError("two-part model has no fitted magnitude part")
    return float(expit(eta)) * float(np.exp(u @ np.asarray(outcome.magnitude_beta)))


# ============================================================
# E-steps
# ============================================================


def _posterior_binary(
    U: np.ndarray,
    Z0: np.ndarray,
    Z1: np.ndarray,
    off0: np.ndarray,
    off1: np.ndarray,
    beta: np.ndarray,
    lam: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    p1 = expit(U @ beta)
    a0 = (1.0 - p1) * (1.0 - expit(Z0 @ lam + off0))
    a1 = p1 * (1.0 - expit(Z1 @ lam + off1))
    s = a0 + a1
    if np.any(s <= 0):
        raise DegeneratePosteriorError(
            "response probability one at every outcome level for a missing unit"
        )
    return a0 / s, a1 / s


def e_step_exact_discrete(
    unit: Unit, outcome: OutcomeModel, miss: MissingnessModel
) -> tuple[float, float]:
    """Posterior over the two outcome levels for one missing-outcome unit.

    The unit must have its covariates and treatment observed and the outcome
    missing; models must carry fitted parameters.
    """
    if unit.ry != 0 or unit.rt != 1 or any(r != 1 for r in unit.rx):
        raise ConfigError("exact E-step applies to observed-(x,t), missing-y units")
    if outcome.beta is None or miss.lam is None:
        raise MisscateError("models must carry parameters for the E-step")
    x = np.asarray([list(unit.x)], dtype=float)
    t = np.asarray([unit.t], dtype=float)
    p = len(unit.x)
    U = design_matrix(outcome.design, x, t)
    Z0 = design_matrix(miss.design, x, t, np.zeros(1))
    Z1 = design_matrix(miss.design, x, t, np.ones(1))
    off0 = _offset_values(miss, outcome.family, x, t, np.zeros(1), p)
    off1 = _offset_values(miss, outcome.family, x, t, np.ones(1), p)
    w0, w1 = _posterior_binary(
        U, Z0, Z1, off0, off1, np.asarray(outcome.beta), np.asarray(miss.lam)
    )
    return float(w0[0]), float(w1[0])


def _normal_logpdf(y: np.ndarray, mean: np.ndarray, sd: float) -> np.ndarray:
    return -0.5 * np.log(2 * np.pi * sd * sd) - 0.5 * ((y - mean) / sd) ** 2


def _log1m_expit(eta: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, eta)


def _fi_weights_log(
    log_f: np.ndarray, log_1mpi: np.ndarray, log_h: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized weights, per-unit log-mean ratio, and per-unit ESS."""
    r = log_f + log_1mpi - log_h
    top = r.max(axis=1, keepdims=True)
    e = np.exp(r - top)
    s = e.sum(axis=1)
    w = e / s[:, None]
    log_mean = top[:, 0] + np.log(s) - np.log(r.shape[1])
    ess = 1.0 / np.sum(w * w, axis=1)
    return w, log_mean, ess


def fractional_impute(
    d: Dataset, outcome: OutcomeModel, miss: MissingnessModel, cfg: EmConfig
) -> ImputationSet:
    """Draws and self-normalized weights for every missing-outcome unit.

    Proposal: the complete-case Gaussian outcome fit, drawn once (seeded by
    cfg.seed).  Weights are proportional to the current outcome density times
    the current missingness probability over the proposal density, normalized
    within unit; uniform weights give an effective sample size of exactly
    cfg.imputations.
    """
    if outcome.family is not Family.GAUSSIAN:
        raise ConfigError("fractional imputation applies to the Gaussian family")
    if outcome.beta is None or outcome.scale is None or miss.lam is None:
        raise MisscateError("models must carry parameters to weight imputations")
    validate_missingness_design(miss, d.p)
    cols, sub = _subset_arrays(d)
    mis = sub & (cols.ry == 0)
    idx = np.where(mis)[0]
    if idx.size == 0:
        raise ConfigError("no missing-outcome units to impute")
    proposal = fit_initial_outcome(d, OutcomeModel(Family.GAUSSIAN, outcome.design))
    x, t = cols.x[mis], cols.t[mis]
    U = design_matrix(outcome.design, x, t)
    rng = np.random.default_rng(cfg.seed)
    mean0 = U @ np.asarray(proposal.beta)
    ystar = mean0[:, None] + proposal.scale * rng.standard_normal(
        (idx.size, cfg.imputations)
    )
    log_h = _normal_logpdf(ystar, mean0[:, None], proposal.scale)
    mean = U @ np.asarray(outcome.beta)
    log_f = _normal_logpdf(ystar, mean[:, None], outcome.scale)
    flat = ystar.reshape(-1)
    xr = np.repeat(x, cfg.imputations, axis=0)
    tr = np.repeat(t, cfg.imputations)
    Z = design_matrix(miss.design, xr, tr, flat)
    off = _offset_values(miss, outcome.family, xr, tr, flat, d.p)
    eta = (Z @ np.asarray(miss.lam) + off).reshape(idx.size, cfg.imputations)
    w, _, ess = _fi_weights_log(log_f, _log1m_expit(eta), log_h)
    return ImputationSet(tuple(int(i) for i in idx), ystar, w, ess)


# ============================================================
# The EM driver
# ============================================================


def _lambda_start(miss: MissingnessModel, q: int, obs_rate: float) -> np.ndarray:
    lam = np.zeros(q)
    rate = min(max(obs_rate, 1e-6), 1 - 1e-6)
    if "1" in miss.design:
        lam[miss.design.index("1")] = np.log(rate / (1 - rate))
    return lam


def fit_em(
    d: Dataset,
    outcome: OutcomeModel,
    miss: MissingnessModel,
    cfg: EmConfig,
    *,
    init_beta: Sequence[float] | None = None,
    init_scale: float | None = None,
    init_lam: Sequence[float] | None = None,
) -> EmResult:
    """Maximize the observed-data likelihood over (outcome, response) jointly.

    Units with observed covariates and treatment enter; missing outcomes are
    integrated out (exactly for a binary outcome, by frozen-draw fractional
    imputation for a Gaussian one).  Stops when the relative change in the
    observed-data log-likelihood drops below cfg.tol; hitting cfg.max_iter
    first returns the last iterate flagged as non-converged.  In exact mode a
    log-likelihood decrease beyond 1e-10 slack raises EmMonotonicityError.

    When neither the response design nor an active offset involves the
    outcome, the likelihood separates and both blocks are fitted directly in
    one step (reported as mode "direct").
    """
    if outcome.family is Family.TWO_PART:
        raise ConfigError(
            "fit the two-part family through estimate_cate_param, which "
            "dispatches its positivity part here"
        )
    validate_missingness_design(miss, d.p)
    if outcome.family is Family.LOGISTIC and d.y_kind is not VariableKind.BINARY:
        raise ConfigError("logit outcome family requires a binary outcome")
    if outcome.family is Family.GAUSSIAN and d.y_kind is VariableKind.BINARY:
        raise ConfigError("gaussian outcome family requires a continuous outcome")
    cols, sub = _subset_arrays(d)
    obs = sub & (cols.ry == 1)
    mis = sub & (cols.ry == 0)
    n_obs, n_mis = int(obs.sum()), int(mis.sum())
    if n_obs == 0:
        raise FitError("no complete cases")
    p = d.p
    x_o, t_o, y_o = cols.x[obs], cols.t[obs], cols.y[obs]
    U_o = design_matrix(outcome.design, x_o, t_o)
    Z_o = design_matrix(miss.design, x_o, t_o, y_o)
    off_o = _offset_values(miss, outcome.family, x_o, t_o, y_o, p)
    diagnostics: dict = {"n_obs": n_obs, "n_missing": n_mis}

    start = fit_initial_outcome(d, outcome)
    beta = (
        np.asarray(init_beta, dtype=float)
        if init_beta is not None
        else np.asarray(start.beta)
    )
    scale = float(init_scale) if init_scale is not None else start.scale
    q = len(miss.design)
    lam = (
        np.asarray(init_lam, dtype=float)
        if init_lam is not None
        else _lambda_start(miss, q, n_obs / (n_obs + n_mis) if n_mis else 1.0)
    )

    def obs_loglik(b: np.ndarray, s: float | None, l: np.ndarray) -> float:
        eta_r = Z_o @ l + off_o
        ll = float(np.sum(eta_r + _log1m_expit(eta_r)))  # log expit
        if outcome.family is Family.LOGISTIC:
            eta = U_o @ b
            ll += float(y_o @ eta + _log1m_expit(eta).sum())
        else:
            ll += float(np.sum(_normal_logpdf(y_o, U_o @ b, s)))
        return ll

    def final(
        b: np.ndarray,
        s: float | None,
        l: np.ndarray,
        trace: list[float],
        converged: bool,
        n_iter: int,
    ) -> EmResult:
        out = replace(outcome, beta=tuple(b), scale=s)
        ms = replace(miss, lam=tuple(l))
        return EmResult(out, ms, tuple(trace), converged, n_iter, diagnostics)

    outcome_free = "y" not in miss.design and (
        miss.offset_delta == 0.0 or miss.offset in (OffsetTerm.NONE, OffsetTerm.TREATMENT)
    )
    if n_mis == 0 or outcome_free:
        # Likelihood separates: each block has its own MLE.
        x_s, t_s, y_s = cols.x[sub], cols.t[sub], cols.y[sub]
        ry_s = (cols.ry[sub] == 1).astype(float)
        y_for_z = np.where(np.isnan(y_s), 0.0, y_s) if n_mis else y_s
        Z_s = design_matrix(miss.design, x_s, t_s, y_for_z)
        off_s = _offset_values(miss, outcome.family, x_s, t_s, y_for_z, p)
        rfit = fit_logistic(Z_s, ry_s, offset=off_s, clip=_LAMBDA_CLIP)
        diagnostics["mode"] = "direct"
        diagnostics["lambda_clipped"] = rfit.clipped
        diagnostics["beta_cov"] = (
            fit_gaussian(U_o, y_o).cov if outcome.family is Family.GAUSSIAN else None
        )
        ll = obs_loglik(np.asarray(start.beta), start.scale, rfit.coef)
        if n_mis:
            eta_m = (
                design_matrix(
                    miss.design, cols.x[mis], cols.t[mis], np.zeros(n_mis)
                )
                @ rfit.coef
                + _offset_values(
                    miss, outcome.family, cols.x[mis], cols.t[mis], np.zeros(n_mis), p
                )
            )
            ll += float(np.sum(_log1m_expit(eta_m)))
        beta0 = np.asarray(start.beta)
        return final(beta0, start.scale, rfit.coef, [ll], True, 1)

    if outcome.family is Family.LOGISTIC:
        return _em_exact_binary(
            d, outcome, miss, cfg, cols, sub, obs, mis,
            U_o, Z_o, off_o, y_o, beta, lam, obs_loglik, final, diagnostics,
        )
    return _em_fractional_gaussian(
        d, outcome, miss, cfg, cols, sub, obs, mis,
        U_o, Z_o, off_o, y_o, beta, scale, lam, obs_loglik, final, diagnostics,
    )


def _em_exact_binary(
    d, outcome, miss, cfg, cols, sub, obs, mis,
    U_o, Z_o, off_o, y_o, beta, lam, obs_loglik, final, diagnostics,
):
    p = d.p
    x_m, t_m = cols.x[mis], cols.t[mis]
    n_mis = x_m.shape[0]
    U_m = design_matrix(outcome.design, x_m, t_m)
    zeros, ones = np.zeros(n_mis), np.ones(n_mis)
    Z_m0 = design_matrix(miss.design, x_m, t_m, zeros)
    Z_m1 = design_matrix(miss.design, x_m, t_m, ones)
    off_m0 = _offset_values(miss, outcome.family, x_m, t_m, zeros, p)
    off_m1 = _offset_values(miss, outcome.family, x_m, t_m, ones, p)
    X_beta = np.vstack([U_o, U_m, U_m])
    resp_beta = np.concatenate([y_o, zeros, ones])
    X_lam = np.vstack([Z_o, Z_m0, Z_m1])
    resp_lam = np.concatenate([np.ones(len(y_o)), zeros, zeros])
    off_lam = np.concatenate([off_o, off_m0, off_m1])

    def miss_loglik(b: np.ndarray, l: np.ndarray) -> float:
        p1 = expit(U_m @ b)
        a0 = (1.0 - p1) * expit(-(Z_m0 @ l + off_m0))
        a1 = p1 * expit(-(Z_m1 @ l + off_m1))
        s = a0 + a1
        if np.any(s <= 0):
            raise DegeneratePosteriorError(
                "missing unit with response probability one at both levels"
            )
        return float(np.sum(np.log(s)))

    ll = obs_loglik(beta, None, lam) + miss_loglik(beta, lam)
    trace = [ll]
    clipped = False
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        w0, w1 = _posterior_binary(U_m, Z_m0, Z_m1, off_m0, off_m1, beta, lam)
        wts = np.concatenate([np.ones(len(y_o)), w0, w1])
        bfit = fit_logistic(X_beta, resp_beta, weights=wts, start=beta, clip=30.0)
        beta = bfit.coef
        lfit = fit_logistic(
            X_lam, resp_lam, weights=wts, offset=off_lam, start=lam, clip=_LAMBDA_CLIP
        )
        lam = lfit.coef
        clipped = clipped or lfit.clipped
        ll = obs_loglik(beta, None, lam) + miss_loglik(beta, lam)
        prev = trace[-1]
        if ll < prev - 1e-10 * (1.0 + abs(prev)):
            raise EmMonotonicityError(
                f"log-likelihood fell from {prev:.12g} to {ll:.12g} at "
                f"iteration {it}"
            )
        trace.append(ll)
        if abs(ll - prev) <= cfg.tol * max(1.0, abs(prev)):
            converged = True
            break
    diagnostics["mode"] = "exact"
    diagnostics["lambda_clipped"] = clipped
    diagnostics["beta_cov"] = None
    return final(beta, None, lam, trace, converged, it)


def _em_fractional_gaussian(
    d, outcome, miss, cfg, cols, sub, obs, mis,
    U_o, Z_o, off_o, y_o, beta, scale, lam, obs_loglik, final, diagnostics,
):
    p = d.p
    x_m, t_m = cols.x[mis], cols.t[mis]
    n_mis, M = x_m.shape[0], cfg.imputations
    U_m = design_matrix(outcome.design, x_m, t_m)
    proposal = fit_initial_outcome(d, OutcomeModel(Family.GAUSSIAN, outcome.design))
    if proposal.scale is None or proposal.scale <= 0:
        raise FitError("degenerate proposal scale")
    rng = np.random.default_rng(cfg.seed)
    mean0 = U_m @ np.asarray(proposal.beta)
    ystar = mean0[:, None] + proposal.scale * rng.standard_normal((n_mis, M))
    log_h = _normal_logpdf(ystar, mean0[:, None], proposal.scale)
    flat = ystar.reshape(-1)
    x_f = np.repeat(x_m, M, axis=0)
    t_f = np.repeat(t_m, M)
    U_f = np.repeat(U_m, M, axis=0)
    Z_f = design_matrix(miss.design, x_f, t_f, flat)
    off_f = _offset_values(miss, outcome.family, x_f, t_f, flat, p)
    X_beta = np.vstack([U_o, U_f])
    resp_beta = np.concatenate([y_o, flat])
    X_lam = np.vstack([Z_o, Z_f])
    resp_lam = np.concatenate([np.ones(len(y_o)), np.zeros(len(flat))])
    off_lam = np.concatenate([off_o, off_f])

    def parts(b: np.ndarray, s: float, l: np.ndarray):
        log_f = _normal_logpdf(ystar, (U_m @ b)[:, None], s)
        eta = (Z_f @ l + off_f).reshape(n_mis, M)
        return _fi_weights_log(log_f, _log1m_expit(eta), log_h)

    w, log_mean, ess = parts(beta, scale, lam)
    ll = obs_loglik(beta, scale, lam) + float(log_mean.sum())
    trace = [ll]
    clipped = False
    converged = False
    bcov = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        wts = np.concatenate([np.ones(len(y_o)), w.reshape(-1)])
        bfit = fit_gaussian(X_beta, resp_beta, weights=wts)
        beta, scale, bcov = bfit.coef, bfit.scale, bfit.cov
        lfit = fit_logistic(
            X_lam, resp_lam, weights=wts, offset=off_lam, start=lam, clip=_LAMBDA_CLIP
        )
        lam = lfit.coef
        clipped = clipped or lfit.clipped
        w, log_mean, ess = parts(beta, scale, lam)
        ll = obs_loglik(beta, scale, lam) + float(log_mean.sum())
        prev = trace[-1]
        trace.append(ll)
        if abs(ll - prev) <= cfg.tol * max(1.0, abs(prev)):
            converged = True
            break
    diagnostics["mode"] = "fractional"
    diagnostics["lambda_clipped"] = clipped
    diagnostics["ess_min"] = float(ess.min()) if n_mis else float(M)
    diagnostics["beta_cov"] = bcov
    return final(beta, scale, lam, trace, converged, it)


# ============================================================
# Effect estimation
# ============================================================


def _completeness_warning(
    outcome: OutcomeModel,
    miss: MissingnessModel,
    cov: np.ndarray | None,
    x: Sequence[float],
    t1: float,
    t0: float,
    p: int,
) -> str | None:
    """Warn when the fitted coefficient combination that carries
    identification sits within two standard errors of zero (Gaussian only)."""
    if outcome.family is not Family.GAUSSIAN or outcome.beta is None:
        return None
    design = outcome.design
    beta = np.asarray(outcome.beta)
    kind = miss.assumption.kind
    combos: list[tuple[str, np.ndarray]] = []
    if kind is Mechanism.TREATMENT_INDEPENDENT:
        vec = np.zeros(len(design))
        if "t" in design:
            vec[design.index("t")] = 1.0
        for j in range(p):
            term = f"t:x{j + 1}"
            if term in design:
                vec[design.index(term)] = float(x[j])
        combos.append(("treatment relevance at the query covariates", vec))
    elif kind is Mechanism.COVARIATE_INDEPENDENT:
        idx = miss.assumption.identifying_index(p)
        for tv in (t1, t0):
            vec = np.zeros(len(design))
            term_x = f"x{idx + 1}"
            if term_x in design:
                vec[design.index(term_x)] = 1.0
            term_tx = f"t:x{idx + 1}"
            if term_tx in design:
                vec[design.index(term_tx)] = float(tv)
            combos.append((f"covariate relevance at t={tv:g}", vec))
    else:
        return None
    msgs = []
    for name, vec in combos:
        val = float(vec @ beta)
        se = float(np.sqrt(vec @ cov @ vec)) if cov is not None else None
        if se is not None and abs(val) < 2 * se:
            msgs.append(f"{name}: {val:.4g} within 2 SE ({se:.4g}) of zero")
        elif se is None and abs(val) < 1e-8:
            msgs.append(f"{name}: {val:.4g} numerically zero")
    return "; ".join(msgs) if msgs else None


def _indicator_dataset(d: Dataset) -> Dataset:
    units = tuple(
        replace(u, y=None if u.y is None else float(u.y > 0)) for u in d.units
    )
    return Dataset(units, d.x_kinds, d.t_kind, VariableKind.BINARY)


def estimate_cate_param(
    d: Dataset,
    outcome: OutcomeModel,
    miss: MissingnessModel,
    cfg: EmConfig,
    x: Sequence[float],
    t1: float,
    t0: float,
    *,
    init_beta: Sequence[float] | None = None,
    init_scale: float | None = None,
    init_lam: Sequence[float] | None = None,
) -> CateEstimate:
    """Plug-in effect at covariate profile x from the joint likelihood fit.

    For the two-part family the positivity part is fitted by the binary EM on
    the indicator of a positive outcome (the response design's "y" then means
    that indicator) and the positive-part Gamma regression uses complete
    cases only, which the identifying mechanisms leave unbiased.
    """
    xq = tuple(float(v) for v in x)
    if outcome.family is Family.TWO_PART:
        ind = _indicator_dataset(d)
        pres = fit_em(
            ind,
            OutcomeModel(Family.LOGISTIC, outcome.design),
            miss,
            cfg,
            init_beta=init_beta,
            init_lam=init_lam,
        )
        cols, sub = _subset_arrays(d)
        cc = sub & (cols.ry == 1)
        pos = cc & (np.where(np.isnan(cols.y), -1.0, cols.y) > 0)
        if int(pos.sum()) <= len(outcome.design):
            raise FitError("too few positive complete cases for the magnitude part")
        U_pos = design_matrix(outcome.design, cols.x[pos], cols.t[pos])
        mfit = fit_gamma_log(U_pos, cols.y[pos])
        fitted = replace(
            outcome,
            beta=pres.outcome.beta,
            magnitude_beta=tuple(mfit.coef),
            scale=mfit.scale,
        )
        tau = model_mean(fitted, xq, t1) - model_mean(fitted, xq, t0)
        details = {
            "converged": pres.converged,
            "n_iter": pres.n_iter,
            "trace_final": pres.trace[-1],
            "mode": pres.diagnostics.get("mode"),
            "lambda_clipped": pres.diagnostics.get("lambda_clipped", False),
            "outcome": fitted,
            "missingness": pres.missingness,
            "gamma_shape": mfit.scale,
        }
        return CateEstimate(tau, float(t1), float(t0), xq, "para", details=details)
    res = fit_em(
        d, outcome, miss, cfg,
        init_beta=init_beta, init_scale=init_scale, init_lam=init_lam,
    )
    tau = model_mean(res.outcome, xq, t1) - model_mean(res.outcome, xq, t0)
    warning = _completeness_warning(
        res.outcome, miss, res.diagnostics.get("beta_cov"), xq, t1, t0, d.p
    )
    details = {
        "converged": res.converged,
        "n_iter": res.n_iter,
        "trace_final": res.trace[-1],
        "mode": res.diagnostics.get("mode"),
        "lambda_clipped": res.diagnostics.get("lambda_clipped", False),
        "ess_min": res.diagnostics.get("ess_min"),
        "completeness_warning": warning,
        "outcome": res.outcome,
        "missingness": res.missingness,
    }
    return CateEstimate(tau, float(t1), float(t0), xq, "para", details=details)
