"""Synthetic benchmark scenarios with controlled outcome missingness.

Covariate, treatment, and outcome are each binary or Gaussian; three response
indicators are generated sequentially (covariate, then treatment, then
outcome), and the outcome-response model takes one extra parent chosen by the
identifying mechanism under study.  Intercepts of the three response models
are calibrated by bisection so each marginal response rate hits a target
(0.8 by default), using a frozen Monte Carlo sample so the calibrated values
depend only on the scenario, never on the simulation seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import (
    ConfigError,
    Dataset,
    Mechanism,
    MisscateError,
    MissingnessAssumption,
    VariableKind,
    dataset_from_columns,
)

__all__ = [
    "CalibrationError",
    "IndicatorModel",
    "ScenarioConfig",
    "SimulatedData",
    "benchmark_scenario",
    "calibrate_intercept",
    "calibrate_scenario_intercepts",
    "simulate",
    "true_cate",
]

_CALIBRATION_SEED = 0x5CA1AB1E
_CALIBRATION_DRAWS = 200_000
_BRACKET = 20.0


class CalibrationError(MisscateError):
    """Target response rate unreachable over the intercept bracket."""


@dataclass(frozen=True)
class IndicatorModel:
    """Logistic model for one response indicator.

    ``intercept`` may be None, in which case it is calibrated at simulation
    time to hit the scenario's target response rate.  The slope fields name
    the parent each multiplies; slopes on parents that a given indicator may
    not depend on must stay at zero (validated by ScenarioConfig).
    """

    intercept: float | None
    on_x: float = 0.0
    on_t: float = 0.0
    on_y: float = 0.0
    on_rx: float = 0.0
    on_rt: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one synthetic scenario.

    Parameter layouts:
      * x_params: (p,) for binary X, (mean, sd) for continuous X.
      * t_params: (a0, ax) logistic for binary T, (a0, ax, sd) linear for
        continuous T.
      * y_params: (b0, bt, bx, btx) logistic for binary Y, plus a trailing sd
        for continuous Y.
    """

    x_kind: VariableKind
    t_kind: VariableKind
    y_kind: VariableKind
    x_params: tuple[float, ...]
    t_params: tuple[float, ...]
    y_params: tuple[float, ...]
    rx_model: IndicatorModel
    rt_model: IndicatorModel
    ry_model: IndicatorModel
    assumption: MissingnessAssumption
    null_effect: bool = False
    target_obs_rate: float = 0.8

    def __post_init__(self) -> None:
        if len(self.x_params) != (1 if self.x_kind is VariableKind.BINARY else 2):
            raise ConfigError("x_params length does not match x_kind")
        if len(self.t_params) != (2 if self.t_kind is VariableKind.BINARY else 3):
            raise ConfigError("t_params length does not match t_kind")
        if len(self.y_params) != (4 if self.y_kind is VariableKind.BINARY else 5):
            raise ConfigError("y_params length does not match y_kind")
        if self.null_effect and (self.y_params[1] != 0.0 or self.y_params[3] != 0.0):
            raise ConfigError("null_effect requires zero treatment coefficients")
        if not 0.0 < self.target_obs_rate < 1.0:
            raise ConfigError("target_obs_rate must lie in (0, 1)")
        if self.rx_model.on_y or self.rx_model.on_rx or self.rx_model.on_rt:
            raise ConfigError("covariate response may depend on (x, t) only")
        if self.rt_model.on_y or self.rt_model.on_rt:
            raise ConfigError("treatment response may depend on (x, t, rx) only")
        kind = self.assumption.kind
        barred = {
            Mechanism.OUTCOME_INDEPENDENT: ("on_y", self.ry_model.on_y),
            Mechanism.TREATMENT_INDEPENDENT: ("on_t", self.ry_model.on_t),
            Mechanism.COVARIATE_INDEPENDENT: ("on_x", self.ry_model.on_x),
        }
        if kind not in barred:
            raise ConfigError(
                "simulation supports the three identifying mechanisms only"
            )
        name, value = barred[kind]
        if value != 0.0:
            raise ConfigError(
                f"outcome response slope {name} must be zero under {kind.value}"
            )


@dataclass(frozen=True)
class SimulatedData:
    """Observed dataset plus its fully observed oracle twin."""

    observed: Dataset
    latent: Dataset
    config: ScenarioConfig
    intercepts: tuple[float, float, float]  # rx, rt, ry response intercepts


def calibrate_intercept(
    linear_predictor_sampler: Callable[[np.random.Generator, int], np.ndarray],
    target_obs_rate: float,
    tol: float = 1e-3,
    seed: int = _CALIBRATION_SEED,
    n_draws: int = _CALIBRATION_DRAWS,
) -> float:
    """Find c with mean(expit(c + L)) within tol of the target rate.

    L is sampled once (at least 1e5 draws) and frozen; bisection then runs on
    the deterministic function of c.  Raises CalibrationError when the target
    is outside the achievable range over c in [-20, 20].
    """
    if not 0.0 < target_obs_rate < 1.0:
        raise ConfigError("target_obs_rate must lie in (0, 1)")
    if n_draws < 100_000:
        raise ConfigError("calibration requires at least 1e5 draws")
    rng = np.random.default_rng(seed)
    draws = np.asarray(linear_predictor_sampler(rng, n_draws), dtype=float)

    def rate(c: float) -> float:
        return float(np.mean(expit(c + draws)))

    lo, hi = -_BRACKET, _BRACKET
    r_lo, r_hi = rate(lo), rate(hi)
    if not r_lo <= target_obs_rate <= r_hi:
        raise CalibrationError(
            f"target rate {target_obs_rate} outside achievable range "
            f"[{r_lo:.6f}, {r_hi:.6f}] for intercepts in [-20, 20]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        if abs(r - target_obs_rate) <= tol:
            return mid
        if r < target_obs_rate:
            lo = mid
        else:
            hi = mid
    raise CalibrationError("bisection failed to reach tolerance in 200 steps")


def _draw_xty(
    cfg: ScenarioConfig, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if cfg.x_kind is VariableKind.BINARY:
        x = (rng.random(n) < cfg.x_params[0]).astype(float)
    else:
        x = cfg.x_params[0] + cfg.x_params[1] * rng.standard_normal(n)
    if cfg.t_kind is VariableKind.BINARY:
        a0, ax = cfg.t_params
        t = (rng.random(n) < expit(a0 + ax * x)).astype(float)
    else:
        a0, ax, sd = cfg.t_params
        t = a0 + ax * x + sd * rng.standard_normal(n)
    b0, bt, bx, btx = cfg.y_params[:4]
    mean = b0 + bt * t + bx * x + btx * t * x
    if cfg.y_kind is VariableKind.BINARY:
        y = (rng.random(n) < expit(mean)).astype(float)
    else:
        y = mean + cfg.y_params[4] * rng.standard_normal(n)
    return x, t, y


def _indicator_parts(
    model: IndicatorModel,
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    rx: np.ndarray | None = None,
    rt: np.ndarray | None = None,
) -> np.ndarray:
    part = model.on_x * x + model.on_t * t + model.on_y * y
    if model.on_rx:
        part = part + model.on_rx * rx
    if model.on_rt:
        part = part + model.on_rt * rt
    return part


@lru_cache(maxsize=None)
def calibrate_scenario_intercepts(
    cfg: ScenarioConfig,
    tol: float = 1e-3,
    n_draws: int = _CALIBRATION_DRAWS,
) -> tuple[float, float, float]:
    """Calibrate (or pass through) the three response intercepts for cfg.

    The three models are calibrated sequentially on one frozen sample because
    later indicators depend on realized earlier ones.  Explicit intercepts in
    the config are honored as-is; calibration fills in only the None slots.
    """
    rng = np.random.default_rng(_CALIBRATION_SEED)
    x, t, y = _draw_xty(cfg, n_draws, rng)
    u_rx, u_rt = rng.random(n_draws), rng.random(n_draws)

    def solve(model: IndicatorModel, part: np.ndarray) -> float:
        if model.intercept is not None:
            return model.intercept
        return calibrate_intercept(
            lambda _rng, _size: part, cfg.target_obs_rate, tol=tol, n_draws=n_draws
        )

    part_rx = _indicator_parts(cfg.rx_model, x, t, y)
    g0 = solve(cfg.rx_model, part_rx)
    rx = (u_rx < expit(g0 + part_rx)).astype(float)
    part_rt = _indicator_parts(cfg.rt_model, x, t, y, rx=rx)
    e0 = solve(cfg.rt_model, part_rt)
    rt = (u_rt < expit(e0 + part_rt)).astype(float)
    part_ry = _indicator_parts(cfg.ry_model, x, t, y, rx=rx, rt=rt)
    f0 = solve(cfg.ry_model, part_ry)
    return g0, e0, f0


def simulate(cfg: ScenarioConfig, n: int, seed: int) -> SimulatedData:
    """Draw n units; same cfg and seed give a bitwise identical result."""
    if n <= 0:
        raise ConfigError("n must be positive")
    g0, e0, f0 = calibrate_scenario_intercepts(cfg)
    rng = np.random.default_rng(seed)
    x, t, y = _draw_xty(cfg, n, rng)
    rx = (rng.random(n) < expit(g0 + _indicator_parts(cfg.rx_model, x, t, y))).astype(
        int
    )
    rt = (
        rng.random(n)
        < expit(e0 + _indicator_parts(cfg.rt_model, x, t, y, rx=rx))
    ).astype(int)
    ry = (
        rng.random(n)
        < expit(f0 + _indicator_parts(cfg.ry_model, x, t, y, rx=rx, rt=rt))
    ).astype(int)
    kinds = ((cfg.x_kind,), cfg.t_kind, cfg.y_kind)
    ones = np.ones(n, dtype=int)
    latent = dataset_from_columns(x[:, None], t, y, ones[:, None], ones, ones, *kinds)
    observed = dataset_from_columns(x[:, None], t, y, rx[:, None], rt, ry, *kinds)
    return SimulatedData(observed, latent, cfg, (g0, e0, f0))


def true_cate(cfg: ScenarioConfig, x: float, t1: float, t0: float) -> float:
    """Effect of moving treatment t0 -> t1 at covariate value x, in closed form."""
    b0, bt, bx, btx = cfg.y_params[:4]
    if cfg.y_kind is VariableKind.BINARY:
        return float(
            expit(b0 + bt * t1 + bx * x + btx * t1 * x)
            - expit(b0 + bt * t0 + bx * x + btx * t0 * x)
        )
    return float((bt + btx * x) * (t1 - t0))


# ============================================================
# Benchmark parameter grid
# ============================================================

# Coefficients are selected by the kind of the variable they multiply, so all
# eight kind combinations are covered by one table.
_X_PARAMS = {VariableKind.BINARY: (0.5,), VariableKind.CONTINUOUS: (0.2, 1.0)}
_T_PARAMS = {VariableKind.BINARY: (-0.3, 0.9), VariableKind.CONTINUOUS: (0.5, 0.9, 1.0)}
_Y_PARAMS = {
    VariableKind.BINARY: (-0.4, 1.1, 0.9, 0.5),
    VariableKind.CONTINUOUS: (-0.3, 1.0, 0.8, 0.5, 1.0),
}
_RX_ON_X = {VariableKind.BINARY: 0.6, VariableKind.CONTINUOUS: -1.0}
_RX_ON_T = {VariableKind.BINARY: -0.4, VariableKind.CONTINUOUS: 0.6}
_RT_ON_X = {VariableKind.BINARY: 0.4, VariableKind.CONTINUOUS: -0.6}
_RT_ON_T = {VariableKind.BINARY: 0.4, VariableKind.CONTINUOUS: -0.4}
_RT_ON_RX = 0.5
_RY_ON_R = 0.4  # shared slope on each earlier response indicator
_U_ON_X = {VariableKind.BINARY: -0.8, VariableKind.CONTINUOUS: -0.4}
_U_ON_T = {VariableKind.BINARY: 0.9, VariableKind.CONTINUOUS: -0.4}
_U_ON_Y = {VariableKind.BINARY: 2.2, VariableKind.CONTINUOUS: -1.8}


def benchmark_scenario(
    x_kind: VariableKind,
    t_kind: VariableKind,
    y_kind: VariableKind,
    mechanism: Mechanism,
    *,
    null_effect: bool = False,
) -> ScenarioConfig:
    """Scenario from the benchmark grid for one kind combination and mechanism."""
    if mechanism is Mechanism.OUTCOME_INDEPENDENT:
        u = IndicatorModel(None, on_x=_U_ON_X[x_kind], on_t=_U_ON_T[t_kind])
    elif mechanism is Mechanism.TREATMENT_INDEPENDENT:
        u = IndicatorModel(None, on_x=_U_ON_X[x_kind], on_y=_U_ON_Y[y_kind])
    elif mechanism is Mechanism.COVARIATE_INDEPENDENT:
        u = IndicatorModel(None, on_t=_U_ON_T[t_kind], on_y=_U_ON_Y[y_kind])
    else:
        raise ConfigError("benchmark grid covers the three identifying mechanisms")
    y_params = _Y_PARAMS[y_kind]
    if null_effect:
        y_params = (y_params[0], 0.0, y_params[2], 0.0) + y_params[4:]
    return ScenarioConfig(
        x_kind=x_kind,
        t_kind=t_kind,
        y_kind=y_kind,
        x_params=_X_PARAMS[x_kind],
        t_params=_T_PARAMS[t_kind],
        y_params=y_params,
        rx_model=IndicatorModel(None, on_x=_RX_ON_X[x_kind], on_t=_RX_ON_T[t_kind]),
        rt_model=IndicatorModel(
            None, on_x=_RT_ON_X[x_kind], on_t=_RT_ON_T[t_kind], on_rx=_RT_ON_RX
        ),
        ry_model=replace(u, on_rx=_RY_ON_R, on_rt=_RY_ON_R),
        assumption=MissingnessAssumption(mechanism),
        null_effect=null_effect,
    )
