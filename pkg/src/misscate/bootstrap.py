"""Percentile bootstrap for effect estimates.

Resamples units with replacement, each replicate drawn from its own
deterministically mixed stream so results do not depend on executor order.
Replicates where the estimator raises a package error are dropped and
counted; more than ten percent of them marks the interval unreliable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import CateEstimate, ConfigError, Dataset, Interval, MisscateError, mix_seed

__all__ = ["BootstrapConfig", "BootstrapResult", "bootstrap_ci", "bootstrap_estimate"]


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 200
    level: float = 0.95
    seed: int = 0

    def __post_init__(self) -> None:
        if self.replicates < 2:
            raise ConfigError("bootstrap needs at least two replicates")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("confidence level must sit strictly inside (0, 1)")


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    interval: Interval
    estimates: tuple[float, ...]
    n_failed: int
    unreliable: bool
    point_outside: bool
    errors: tuple[str, ...] = field(default=(), compare=False)


def bootstrap_ci(
    d: Dataset,
    estimator: Callable[[Dataset], float],
    cfg: BootstrapConfig = BootstrapConfig(),
) -> BootstrapResult:
    """Point estimate on the full data plus a percentile interval.

    ``estimator`` maps a dataset to a scalar; it is called once on ``d`` (a
    failure there propagates) and once per resample.  Resample b draws its
    indices from a fresh generator seeded by mixing cfg.seed with b, so any
    subset of replicates can be reproduced in isolation.
    """
    point = float(estimator(d))
    n = d.n
    estimates: list[float] = []
    errors: list[str] = []
    for b in range(cfg.replicates):
        rng = np.random.default_rng(np.random.PCG64(mix_seed(cfg.seed, b)))
        idx = rng.integers(0, n, size=n)
        try:
            estimates.append(float(estimator(d.take(idx))))
        except MisscateError as exc:
            errors.append(f"replicate {b}: {exc}")
    if not estimates:
        raise MisscateError(
            f"all {cfg.replicates} bootstrap replicates failed; "
            f"first error: {errors[0]}"
        )
    n_failed = len(errors)
    alpha = 1.0 - cfg.level
    lo, hi = np.quantile(
        np.asarray(estimates), [alpha / 2, 1.0 - alpha / 2], method="linear"
    )
    interval = Interval(float(lo), float(hi), cfg.level)
    return BootstrapResult(
        point=point,
        interval=interval,
        estimates=tuple(estimates),
        n_failed=n_failed,
        unreliable=n_failed > 0.1 * cfg.replicates,
        point_outside=not (interval.lower <= point <= interval.upper),
        errors=tuple(errors),
    )


def bootstrap_estimate(
    d: Dataset,
    estimator: Callable[[Dataset], CateEstimate],
    cfg: BootstrapConfig = BootstrapConfig(),
) -> CateEstimate:
    """The full estimate with its percentile interval attached.

    ``estimator`` must return a CateEstimate whose tuning is frozen inside the
    closure, so every resample reuses the point estimate's smoothing choices.
    The returned estimate carries the interval plus resample diagnostics in
    its details.
    """
    full = estimator(d)
    res = bootstrap_ci(d, lambda db: estimator(db).tau, cfg)
    details = dict(full.details)
    details["bootstrap"] = {
        "replicates": cfg.replicates,
        "n_failed": res.n_failed,
        "unreliable": res.unreliable,
        "point_outside": res.point_outside,
    }
    return replace(full, interval=res.interval, details=details)
