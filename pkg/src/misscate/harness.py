"""Benchmark study driver: scenarios by replicates by estimators.

Scenario ids name the variable kinds and the mechanism, e.g. "bcb-a2" is
binary X, continuous T, binary Y under treatment-independent response, and a
"-null" suffix zeroes the treatment effect.  Each replicate simulates one
dataset and runs every requested estimator at the scenario's query point;
results land in flat record rows plus per-cell summaries, and optionally in
CSV files and one boxplot per scenario.
"""

from __future__ import annotations

import csv
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import cca_fit, miss_indicator_fit, oracle_fit
from .core import ConfigError, Mechanism, MisscateError, VariableKind, mix_seed
from .dgp import ScenarioConfig, benchmark_scenario, simulate, true_cate
from .em import (
    EmConfig,
    Family,
    MissingnessModel,
    OutcomeModel,
    default_missingness_design,
    default_outcome_design,
    estimate_cate_param,
)
from .np2sls import NpTuning, SieveConfig, estimate_cate_np, plan_np
from .svgplot import render_boxplot, save_svg

__all__ = [
    "StudyConfig",
    "StudyResult",
    "parse_scenario",
    "scenario_config",
    "query_point",
    "run_study",
    "write_records_csv",
    "write_summary_csv",
]

_SCENARIO_RE = re.compile(r"^([bc])([bc])([bc])-(a1|a2|a3)(-null)?$")
_ESTIMATORS = ("cca", "para", "np", "miss-ind", "oracle")
_KIND = {"b": VariableKind.BINARY, "c": VariableKind.CONTINUOUS}


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple[str, ...]
    n: int = 1000
    replicates: int = 100
    estimators: tuple[str, ...] = ("cca", "para", "np")
    seed: int = 0
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise ConfigError("no scenarios requested")
        for sid in self.scenarios:
            parse_scenario(sid)
        for est in self.estimators:
            if est not in _ESTIMATORS:
                raise ConfigError(
                    f"unknown estimator {est!r}; choose from {_ESTIMATORS}"
                )
        if self.n < 10 or self.replicates < 1 or self.threads < 1:
            raise ConfigError("n, replicates, and threads must be sensible")


@dataclass(frozen=True)
class StudyResult:
    records: tuple[dict, ...]
    summaries: tuple[dict, ...]


def parse_scenario(sid: str) -> tuple[VariableKind, VariableKind, VariableKind, str, bool]:
    m = _SCENARIO_RE.match(sid)
    if not m:
        raise ConfigError(
            f"bad scenario id {sid!r}; expected like 'bbb-a2' or 'bcb-a3-null'"
        )
    return (
        _KIND[m.group(1)],
        _KIND[m.group(2)],
        _KIND[m.group(3)],
        m.group(4),
        m.group(5) is not None,
    )


def scenario_config(sid: str) -> ScenarioConfig:
    xk, tk, yk, mech, null = parse_scenario(sid)
    return benchmark_scenario(
        xk, tk, yk, Mechanism.from_token(mech), null_effect=null
    )


def query_point(cfg: ScenarioConfig) -> tuple[tuple[float, ...], float, float]:
    """Where effects are evaluated: x = 1 for a binary covariate, 0 for a
    continuous one; treatment contrast is always 1 versus 0."""
    x = (1.0,) if cfg.x_kind is VariableKind.BINARY else (0.0,)
    return x, 1.0, 0.0


def _estimate_one(
    method: str,
    sim,
    cfg: ScenarioConfig,
    x: tuple[float, ...],
    t1: float,
    t0: float,
    tuning: NpTuning | None,
    em_seed: int,
) -> float:
    p = len(x)
    family = Family.LOGISTIC if cfg.y_kind is VariableKind.BINARY else Family.GAUSSIAN
    outcome = OutcomeModel(family, default_outcome_design(p))
    if method == "para":
        miss = MissingnessModel(
            cfg.assumption, default_missingness_design(cfg.assumption, p)
        )
        est = estimate_cate_param(
            sim.observed, outcome, miss, EmConfig(seed=em_seed), x, t1, t0
        )
    elif method == "np":
        est = estimate_cate_np(
            sim.observed, cfg.assumption, x, t1, t0, tuning=tuning
        )
    elif method == "cca":
        est = cca_fit(sim.observed, outcome, x, t1, t0)
    elif method == "miss-ind":
        est = miss_indicator_fit(sim.observed, outcome, x, t1, t0)
    elif method == "oracle":
        est = oracle_fit(sim.latent, outcome, x, t1, t0)
    else:
        raise ConfigError(f"unknown estimator {method!r}")
    return est.tau


def _replicate_rows(args: tuple) -> list[dict]:
    sid, n, seed, s_idx, rep, estimators, tuning = args
    cfg = scenario_config(sid)
    x, t1, t0 = query_point(cfg)
    truth = true_cate(cfg, x[0], t1, t0)
    null = cfg.null_effect
    metric = "error" if null else "percent_bias"
    sim = simulate(cfg, n, mix_seed(seed, s_idx, rep))
    rows = []
    for method in estimators:
        t_start = time.perf_counter()
        tau = None
        message = ""
        try:
            tau = _estimate_one(
                method, sim, cfg, x, t1, t0, tuning, mix_seed(seed, s_idx, rep, 1)
            )
        except MisscateError as exc:
            message = str(exc)
        elapsed = time.perf_counter() - t_start
        value = None
        if tau is not None:
            value = (tau - truth) if null else 100.0 * (tau - truth) / truth
        rows.append(
            {
                "scenario": sid,
                "replicate": rep,
                "estimator": method,
                "n": n,
                "tau_true": truth,
                "tau_hat": tau,
                "metric": metric,
                "value": value,
                "failed": tau is None,
                "message": message,
                "seconds": round(elapsed, 4),
            }
        )
    return rows


def _plan_scenario_tuning(
    sid: str, study: StudyConfig, s_idx: int
) -> NpTuning | None:
    if "np" not in study.estimators:
        return None
    cfg = scenario_config(sid)
    x, t1, t0 = query_point(cfg)
    sim = simulate(cfg, study.n, mix_seed(study.seed, s_idx, 0))
    return plan_np(sim.observed, cfg.assumption, x, t1, t0, SieveConfig())


def run_study(study: StudyConfig) -> StudyResult:
    """Run every scenario, returning flat records plus per-cell summaries.

    Replicate seeds mix the study seed with the scenario index and the
    replicate number, so any single cell can be reproduced alone.  Series
    tuning for the two-stage estimator is planned once per scenario on
    replicate zero's data and reused verbatim across that scenario's
    replicates.  Estimator failures are counted, carried in the records with
    their message, and excluded from summaries.
    """
    tasks = []
    for s_idx, sid in enumerate(study.scenarios):
        tuning = _plan_scenario_tuning(sid, study, s_idx)
        for rep in range(study.replicates):
            tasks.append(
                (sid, study.n, study.seed, s_idx, rep, study.estimators, tuning)
            )
    if study.threads > 1:
        with ProcessPoolExecutor(max_workers=study.threads) as pool:
            chunks = list(pool.map(_replicate_rows, tasks, chunksize=4))
    else:
        chunks = [_replicate_rows(t) for t in tasks]
    records = tuple(row for chunk in chunks for row in chunk)
    summaries = tuple(_summarize(records, study))
    if study.out_dir is not None:
        os.makedirs(study.out_dir, exist_ok=True)
        write_records_csv(records, os.path.join(study.out_dir, "records.csv"))
        write_summary_csv(summaries, os.path.join(study.out_dir, "summary.csv"))
        for sid in study.scenarios:
            svg = _scenario_boxplot(records, sid, study.estimators)
            save_svg(svg, os.path.join(study.out_dir, f"{sid}.svg"))
    return StudyResult(records, summaries)


def _summarize(records: tuple[dict, ...], study: StudyConfig) -> list[dict]:
    out = []
    for sid in study.scenarios:
        for method in study.estimators:
            cell = [
                r for r in records
                if r["scenario"] == sid and r["estimator"] == method
            ]
            ok = [r["value"] for r in cell if not r["failed"]]
            row = {
                "scenario": sid,
                "estimator": method,
                "metric": cell[0]["metric"] if cell else "",
                "n_ok": len(ok),
                "n_failed": len(cell) - len(ok),
            }
            if ok:
                arr = np.asarray(ok)
                q25, q50, q75 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
                row.update(
                    mean=float(arr.mean()),
                    median=float(q50),
                    q25=float(q25),
                    q75=float(q75),
                    iqr=float(q75 - q25),
                )
            else:
                row.update(mean=None, median=None, q25=None, q75=None, iqr=None)
            out.append(row)
    return out


def _scenario_boxplot(
    records: tuple[dict, ...], sid: str, estimators: tuple[str, ...]
) -> str:
    groups = []
    metric = "value"
    label = ""
    for method in estimators:
        vals = [
            r["value"]
            for r in records
            if r["scenario"] == sid and r["estimator"] == method and not r["failed"]
        ]
        groups.append((method, vals))
        if not label:
            cell = [r for r in records if r["scenario"] == sid]
            label = cell[0]["metric"] if cell else metric
    return render_boxplot(groups, title=sid, ylabel=label.replace("_", " "))


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(records: tuple[dict, ...], path: str) -> None:
    cols = [
        "scenario", "replicate", "estimator", "n", "tau_true", "tau_hat",
        "metric", "value", "failed", "message", "seconds",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([_csv_cell(r[c]) for c in cols])


def write_summary_csv(summaries: tuple[dict, ...], path: str) -> None:
    cols = [
        "scenario", "estimator", "metric", "n_ok", "n_failed",
        "mean", "median", "q25", "q75", "iqr",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in summaries:
            w.writerow([_csv_cell(r[c]) for c in cols])
