"""Command line front end.

Subcommands: ``simulate`` writes benchmark data to CSV, ``estimate`` runs one
estimator on a CSV dataset, ``sensitivity`` sweeps the response-offset grid,
``bench`` drives a full simulation study, and ``verify`` re-derives the two
hand-checkable non-identification examples.  Results print as JSON on stdout
unless ``--out`` redirects them; exit code 1 marks an estimation failure and
2 a configuration problem.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from enum import Enum
from typing import Sequence

import numpy as np

from .baselines import cca_fit, miss_indicator_fit, oracle_fit
from .bootstrap import BootstrapConfig, bootstrap_ci
from .core import (
    ConfigError,
    Dataset,
    MisscateError,
    MissingnessAssumption,
    Mechanism,
    VariableKind,
    read_dataset_csv,
    write_dataset_csv,
)
from .discrete import verify_counterexample_1, verify_counterexample_2
from .em import (
    EmConfig,
    Family,
    MissingnessModel,
    OffsetTerm,
    OutcomeModel,
    default_missingness_design,
    default_outcome_design,
    estimate_cate_param,
)
from .harness import StudyConfig, parse_scenario, run_study, scenario_config, query_point
from .np2sls import RegularizationConfig, SieveConfig, estimate_cate_np
from .sensitivity import (
    SensitivitySpec,
    sensitivity_curve,
    write_sensitivity_csv,
)
from .svgplot import render_lines, save_svg
from .dgp import simulate, true_cate

_KIND_TOKENS = {"binary": VariableKind.BINARY, "continuous": VariableKind.CONTINUOUS}


def _jsonable(v):
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        return {f.name: _jsonable(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if v is None or isinstance(v, (bool, int, float, str)):
        return v
    return repr(v)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
            fh.write("\n")
    else:
        print(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        raise ConfigError("this command needs --config with dataset metadata")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _kinds(cfg: dict) -> tuple[tuple[VariableKind, ...], VariableKind, VariableKind]:
    try:
        xk = tuple(_KIND_TOKENS[k] for k in cfg["x_kinds"])
        tk = _KIND_TOKENS[cfg["t_kind"]]
        yk = _KIND_TOKENS[cfg["y_kind"]]
    except KeyError as exc:
        raise ConfigError(
            f"config must declare x_kinds, t_kind, y_kind as "
            f"'binary'/'continuous' ({exc} missing or invalid)"
        ) from exc
    return xk, tk, yk


def _assumption(cfg: dict) -> MissingnessAssumption:
    block = cfg.get("assumption")
    if not isinstance(block, dict) or "mechanism" not in block:
        raise ConfigError('config needs an assumption block with a "mechanism"')
    kind = Mechanism.from_token(str(block["mechanism"]))
    idx = block.get("identifying_covariate_index")
    return MissingnessAssumption(kind, None if idx is None else int(idx))


def _load_dataset(path: str, cfg: dict) -> Dataset:
    xk, tk, yk = _kinds(cfg)
    return read_dataset_csv(path, xk, tk, yk)


def _outcome_model(cfg: dict, p: int, y_kind: VariableKind) -> OutcomeModel:
    block = cfg.get("outcome", {})
    fam_token = block.get(
        "family", "logistic" if y_kind is VariableKind.BINARY else "gaussian"
    )
    try:
        family = Family(fam_token)
    except ValueError:
        raise ConfigError(f"unknown outcome family {fam_token!r}") from None
    design = tuple(block.get("design", default_outcome_design(p)))
    return OutcomeModel(family, design)


def _missingness_model(cfg: dict, assumption, p: int) -> MissingnessModel:
    block = cfg.get("missingness", {})
    design = tuple(block.get("design", default_missingness_design(assumption, p)))
    return MissingnessModel(assumption, design)


def _em_config(cfg: dict, seed: int) -> EmConfig:
    block = cfg.get("em", {})
    return EmConfig(
        imputations=int(block.get("imputations", 50)),
        tol=float(block.get("tol", 1e-8)),
        max_iter=int(block.get("max_iter", 500)),
        seed=int(block.get("seed", seed)),
    )


def _sieve(cfg: dict) -> SieveConfig:
    block = cfg.get("sieve", {})
    return SieveConfig(
        n_outcome=int(block.get("n_outcome", 4)),
        n_conditioner=int(block.get("n_conditioner", 3)),
        whiten=bool(block.get("whiten", True)),
    )


def _reg(cfg: dict) -> RegularizationConfig:
    block = cfg.get("regularization", {})
    return RegularizationConfig(
        bound=float(block.get("bound", 10.0)),
        pi_min=float(block.get("pi_min", 0.05)),
    )


def _query(cfg: dict, args, p: int) -> tuple[tuple[float, ...], float, float]:
    block = cfg.get("query", {})
    if args.x is not None:
        x = tuple(float(v) for v in args.x.split(","))
    elif "x" in block:
        x = tuple(float(v) for v in block["x"])
    else:
        raise ConfigError("query covariate profile missing (--x or config query.x)")
    if len(x) != p:
        raise ConfigError(f"query profile has {len(x)} values, dataset has {p}")
    t1 = args.t1 if args.t1 is not None else float(block.get("t1", 1.0))
    t0 = args.t0 if args.t0 is not None else float(block.get("t0", 0.0))
    return x, float(t1), float(t0)


# ----------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = scenario_config(args.scenario)
    sim = simulate(cfg, args.n, args.seed)
    write_dataset_csv(sim.observed, args.out)
    if args.latent_out:
        write_dataset_csv(sim.latent, args.latent_out)
    x, t1, t0 = query_point(cfg)
    _emit(
        {
            "scenario": args.scenario,
            "n": sim.observed.n,
            "seed": args.seed,
            "out": args.out,
            "latent_out": args.latent_out,
            "calibrated_intercepts": sim.intercepts,
            "query": {"x": list(x), "t1": t1, "t0": t0},
            "tau_true": true_cate(cfg, x[0], t1, t0),
        },
        None,
    )
    return 0


def _cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    d = _load_dataset(args.data, cfg)
    assumption = _assumption(cfg)
    x, t1, t0 = _query(cfg, args, d.p)
    outcome = _outcome_model(cfg, d.p, d.y_kind)
    method = args.method

    def run(data: Dataset):
        if method == "para":
            miss = _missingness_model(cfg, assumption, data.p)
            return estimate_cate_param(
                data, outcome, miss, _em_config(cfg, args.seed), x, t1, t0
            )
        if method == "np":
            return estimate_cate_np(
                data, assumption, x, t1, t0, sieve=_sieve(cfg), reg=_reg(cfg)
            )
        if method == "cca":
            return cca_fit(data, outcome, x, t1, t0)
        if method == "miss-ind":
            return miss_indicator_fit(data, outcome, x, t1, t0)
        if method == "oracle":
            return oracle_fit(data, outcome, x, t1, t0)
        raise ConfigError(f"unknown method {method!r}")

    est = run(d)
    payload = {
        "method": method,
        "tau": est.tau,
        "t1": t1,
        "t0": t0,
        "x": list(x),
        "details": est.details,
    }
    if args.bootstrap:
        boot = bootstrap_ci(
            d,
            lambda db: run(db).tau,
            BootstrapConfig(args.bootstrap, args.level, args.seed),
        )
        payload["interval"] = {
            "lower": boot.interval.lower,
            "upper": boot.interval.upper,
            "level": boot.interval.level,
            "n_failed": boot.n_failed,
            "unreliable": boot.unreliable,
        }
    _emit(payload, args.out)
    return 0


def _parse_deltas(text: str | None) -> tuple[float, ...] | None:
    if text is None:
        return None
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("--deltas range form is start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        return tuple(float(v) for v in np.linspace(start, stop, count))
    return tuple(float(v) for v in text.split(","))


def _cmd_sensitivity(args) -> int:
    cfg = _load_config(args.config)
    d = _load_dataset(args.data, cfg)
    assumption = _assumption(cfg)
    x, t1, t0 = _query(cfg, args, d.p)
    outcome = _outcome_model(cfg, d.p, d.y_kind)
    miss = _missingness_model(cfg, assumption, d.p)
    deltas = _parse_deltas(args.deltas)
    spec_kwargs: dict = {"warm_start": not args.cold}
    if deltas is not None:
        spec_kwargs["deltas"] = deltas
    if args.offset:
        spec_kwargs["offset"] = OffsetTerm(args.offset)
    spec = SensitivitySpec(**spec_kwargs)
    boot = (
        BootstrapConfig(args.bootstrap, args.level, args.seed)
        if args.bootstrap
        else None
    )
    result = sensitivity_curve(
        d, outcome, miss, _em_config(cfg, args.seed), x, t1, t0, spec, boot
    )
    if args.csv:
        write_sensitivity_csv(result, args.csv)
    if args.svg:
        pts = [(p.delta, p.tau) for p in result.points]
        svg = render_lines(
            [("effect", pts)],
            title="sensitivity sweep",
            xlabel="offset coefficient",
            ylabel="estimated effect",
            vline=0.0,
        )
        save_svg(svg, args.svg)
    _emit(
        {
            "offset": result.offset.value,
            "n_failed": result.n_failed,
            "baseline_tau": result.baseline.tau,
            "points": [
                {
                    "delta": p.delta,
                    "tau": p.tau,
                    "lower": p.interval.lower if p.interval else None,
                    "upper": p.interval.upper if p.interval else None,
                    "message": p.message,
                }
                for p in result.points
            ],
        },
        args.out,
    )
    return 0


_ALL_SCENARIOS = tuple(
    f"{x}{t}{y}-{m}"
    for m in ("a1", "a2", "a3")
    for x in "bc"
    for t in "bc"
    for y in "bc"
)


def _cmd_bench(args) -> int:
    if args.scenarios == "all":
        scenarios = _ALL_SCENARIOS
    else:
        scenarios = tuple(s.strip() for s in args.scenarios.split(",") if s.strip())
    study = StudyConfig(
        scenarios=scenarios,
        n=args.n,
        replicates=args.replicates,
        estimators=tuple(args.estimators.split(",")),
        seed=args.seed,
        threads=args.threads,
        out_dir=args.out_dir,
    )
    result = run_study(study)
    _emit({"summaries": list(result.summaries), "out_dir": args.out_dir}, args.out)
    return 0


def _cmd_verify(args) -> int:
    ok = True
    for report in (verify_counterexample_1(), verify_counterexample_2()):
        for check in report.checks:
            status = "ok" if check.passed else "FAILED"
            print(f"{report.name}: {check.name}: {status}")
            ok = ok and check.passed
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


# ----------------------------------------------------------------
# Parser
# ----------------------------------------------------------------


def _add_query_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--x", help="query covariate profile, comma separated")
    p.add_argument("--t1", type=float, help="treated level (default 1)")
    p.add_argument("--t0", type=float, help="control level (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misscate",
        description="effect estimation under nonignorable missingness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write benchmark data to CSV")
    p_sim.add_argument("--scenario", required=True, help="id like bbb-a2 or bcb-a3-null")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="observed-data CSV path")
    p_sim.add_argument("--latent-out", help="also write the pre-masking data")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="run one estimator on a CSV dataset")
    p_est.add_argument("--data", required=True)
    p_est.add_argument(
        "--method",
        required=True,
        choices=("np", "para", "cca", "miss-ind", "oracle"),
    )
    p_est.add_argument("--config", required=True, help="JSON dataset/model metadata")
    _add_query_flags(p_est)
    p_est.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p_est.add_argument("--level", type=float, default=0.95)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--out", help="write the JSON result here instead of stdout")
    p_est.set_defaults(func=_cmd_estimate)

    p_sen = sub.add_parser("sensitivity", help="sweep the response offset grid")
    p_sen.add_argument("--data", required=True)
    p_sen.add_argument("--config", required=True)
    _add_query_flags(p_sen)
    p_sen.add_argument(
        "--deltas", help="comma list or start:stop:count (default -2:2:21)"
    )
    p_sen.add_argument(
        "--offset", choices=("outcome", "treatment", "identifying"),
        help="override the mechanism's default perturbation direction",
    )
    p_sen.add_argument("--cold", action="store_true", help="disable warm starts")
    p_sen.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p_sen.add_argument("--level", type=float, default=0.95)
    p_sen.add_argument("--seed", type=int, default=0)
    p_sen.add_argument("--csv", help="write the curve as CSV here")
    p_sen.add_argument("--svg", help="render the curve as SVG here")
    p_sen.add_argument("--out", help="write the JSON result here instead of stdout")
    p_sen.set_defaults(func=_cmd_sensitivity)

    p_bench = sub.add_parser("bench", help="run a simulation study")
    p_bench.add_argument(
        "--scenarios", required=True, help='comma list of ids, or "all"'
    )
    p_bench.add_argument("--n", type=int, default=1000)
    p_bench.add_argument("--replicates", type=int, default=100)
    p_bench.add_argument("--estimators", default="cca,para,np")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--out-dir", help="write records/summary/boxplots here")
    p_bench.add_argument("--out", help="write the JSON summary here instead of stdout")
    p_bench.set_defaults(func=_cmd_bench)

    p_ver = sub.add_parser(
        "verify", help="re-derive the hand-checkable non-identification examples"
    )
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MisscateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
