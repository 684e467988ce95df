"""Point identification of discrete outcome laws under outcome nonresponse.

With all variables discrete, the complete-case cell fractions and the
per-level missing fractions form a linear system in the response odds
zeta(y) = P(miss | y, .) / P(observe | y, .): each instrument level j gives
one equation  sum_k Theta[j,k] zeta(y_k) = b[j].  When the Theta matrix has
full column rank, the odds (and hence the full-data conditional outcome law)
are identified; rank failure under the treatment-instrument route coincides
with a null stratum effect, which is detected and returned as an exact zero.

Everything here runs in two arithmetic modes: floats for data, and
``fractions.Fraction`` end to end for the closed-form non-identification
examples, which are checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .core import (
    CateEstimate,
    ConfigError,
    Dataset,
    Mechanism,
    MisscateError,
    MissingnessAssumption,
    VariableKind,
    as_columns,
)

__all__ = [
    "InstrumentRole",
    "ObservedConditionals",
    "RankCheck",
    "OddsSolution",
    "IdentifiedDistribution",
    "InsufficientVariationError",
    "RankDeficientError",
    "InfeasibleOddsError",
    "estimate_observed_conditionals",
    "completeness_rank_check",
    "solve_response_odds",
    "identify_outcome_distribution",
    "cate_discrete",
    "verify_counterexample_1",
    "verify_counterexample_2",
    "CounterexampleReport",
]


class InsufficientVariationError(MisscateError):
    """Fewer than two instrument levels in the conditioning cell."""


class RankDeficientError(MisscateError):
    """First-stage matrix does not have full column rank."""


class InfeasibleOddsError(MisscateError):
    """Solved response odds are materially negative."""


class InstrumentRole(Enum):
    TREATMENT = "treatment"  # condition on X = x, instrument levels run over T
    COVARIATE = "covariate"  # condition on T = t (and X^c), instrument is X^id


@dataclass(frozen=True)
class ObservedConditionals:
    """Cell fractions entering the response-odds system.

    theta[j, k] is the fraction of units at instrument level j with observed
    outcome level k; b[j] is the fraction at level j with missing outcome.
    Arrays may hold floats or Fractions (object dtype) for exact work.
    """

    theta: np.ndarray
    b: np.ndarray
    instrument_levels: tuple[float, ...]
    outcome_levels: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    @property
    def exact(self) -> bool:
        return self.theta.dtype == object


class RankCheck(NamedTuple):
    complete: bool
    rank: int
    n_levels: int


@dataclass(frozen=True)
class OddsSolution:
    zeta: np.ndarray            # response odds per outcome level
    response_prob: np.ndarray   # 1 / (1 + zeta)
    residual: float
    clamped: tuple[int, ...]    # outcome level indices snapped up to zero


@dataclass(frozen=True)
class IdentifiedDistribution:
    probs: np.ndarray                 # (J, K) full-data P(Y = y_k | level_j, cell)
    pre_normalization_row_sums: np.ndarray
    flagged_rows: tuple[int, ...]     # rows whose raw sum strayed past 0.05


def estimate_observed_conditionals(
    d: Dataset,
    role: InstrumentRole,
    conditioning,
    *,
    identifying_covariate_index: int = 0,
) -> ObservedConditionals:
    """Tabulate the response-odds system from data.

    Args:
        d: dataset with binary outcome and discrete instrument/conditioning
            variables.
        role: whether treatment levels or the identifying covariate's levels
            index the equations.
        conditioning: the held-fixed values. For the treatment role this is
            the covariate vector x; for the covariate role it is a pair
            (t, x_rest) where x_rest holds the non-identifying covariate
            values in column order (empty tuple when X is univariate).
        identifying_covariate_index: which covariate is the instrument under
            the covariate role.

    Only units with every covariate and the treatment observed enter.  The
    outcome column must be binary; instrument levels with no units in the
    conditioning cell are dropped with a warning.
    """
    if d.y_kind is not VariableKind.BINARY:
        raise ConfigError("discrete identification requires a binary outcome")
    cols = as_columns(d)
    base = (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    if role is InstrumentRole.TREATMENT:
        if d.t_kind is not VariableKind.BINARY:
            raise ConfigError("treatment must be binary to act as the instrument")
        instrument = cols.t
        xq = np.asarray(conditioning, dtype=float).reshape(-1)
        if xq.shape[0] != d.p:
            raise ConfigError(f"conditioning covariate vector must have length {d.p}")
        in_cell = base & np.all(cols.x == xq, axis=1)
    else:
        idx = identifying_covariate_index
        if not 0 <= idx < d.p:
            raise ConfigError(f"identifying covariate index {idx} out of range")
        if d.x_kinds[idx] is not VariableKind.BINARY:
            raise ConfigError("identifying covariate must be binary to instrument")
        t_value, x_rest = conditioning
        rest_cols = [j for j in range(d.p) if j != idx]
        x_rest = np.asarray(x_rest, dtype=float).reshape(-1)
        if x_rest.shape[0] != len(rest_cols):
            raise ConfigError(
                f"x_rest must supply {len(rest_cols)} non-identifying values"
            )
        instrument = cols.x[:, idx]
        in_cell = base & (cols.t == float(t_value))
        for j, v in zip(rest_cols, x_rest):
            in_cell &= cols.x[:, j] == v
    levels = np.unique(instrument[base])
    warnings: list[str] = []
    kept: list[float] = []
    theta_rows: list[np.ndarray] = []
    b_rows: list[float] = []
    outcome_levels = (0.0, 1.0)
    for lvl in levels:
        m = in_cell & (instrument == lvl)
        cnt = int(m.sum())
        if cnt == 0:
            warnings.append(f"instrument level {lvl:g} empty in conditioning cell")
            continue
        obs = m & (cols.ry == 1)
        row = np.array(
            [float(np.sum(obs & (cols.y == yk))) / cnt for yk in outcome_levels]
        )
        theta_rows.append(row)
        b_rows.append(float(np.sum(m & (cols.ry == 0))) / cnt)
        kept.append(float(lvl))
    if len(kept) < 2:
        raise InsufficientVariationError(
            f"only {len(kept)} instrument level(s) observed in the cell"
        )
    return ObservedConditionals(
        theta=np.array(theta_rows),
        b=np.array(b_rows),
        instrument_levels=tuple(kept),
        outcome_levels=outcome_levels,
        warnings=tuple(warnings),
    )


# ============================================================
# Exact (Fraction) linear algebra, kept deliberately small
# ============================================================


def _exact_rank(mat: Sequence[Sequence[Fraction]]) -> int:
    rows = [list(r) for r in mat]
    ncol = len(rows[0])
    rank = 0
    col = 0
    while rank < len(rows) and col < ncol:
        piv = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pr = rows[rank]
        for i in range(rank + 1, len(rows)):
            if rows[i][col] != 0:
                f = rows[i][col] / pr[col]
                rows[i] = [a - f * b for a, b in zip(rows[i], pr)]
        rank += 1
        col += 1
    return rank


def _exact_solve(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(a[0])
    if len(a) != n:  # overdetermined: exact normal equations
        ata = [[sum(a[r][i] * a[r][j] for r in range(len(a))) for j in range(n)] for i in range(n)]
        atb = [sum(a[r][i] * b[r] for r in range(len(a))) for i in range(n)]
        return _exact_solve(ata, atb)
    rows = [list(r) + [b[i]] for i, r in enumerate(a)]
    for c in range(n):
        piv = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if piv is None:
            raise RankDeficientError("exact system is singular")
        rows[c], rows[piv] = rows[piv], rows[c]
        pr = rows[c]
        for i in range(n):
            if i != c and rows[i][c] != 0:
                f = rows[i][c] / pr[c]
                rows[i] = [u - f * v for u, v in zip(rows[i], pr)]
    return [rows[i][n] / rows[i][i] for i in range(n)]


def completeness_rank_check(oc: ObservedConditionals, tol: float = 1e-8) -> RankCheck:
    """Full column rank of theta is the testable completeness condition."""
    k = len(oc.outcome_levels)
    if oc.exact:
        rank = _exact_rank(oc.theta.tolist())
    else:
        s = np.linalg.svd(oc.theta, compute_uv=False)
        rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return RankCheck(complete=rank == k, rank=rank, n_levels=k)


def solve_response_odds(oc: ObservedConditionals, *, tol: float = 1e-8) -> OddsSolution:
    """Solve theta zeta = b for the per-level response odds.

    Requires full column rank.  Negative solutions beyond -tol mean the cell
    fractions are not consistent with any response distribution and raise;
    values in [-tol, 0) are rounding artifacts and are snapped to zero with
    the level recorded.
    """
    check = completeness_rank_check(oc, tol=tol)
    if not check.complete:
        raise RankDeficientError(
            f"first-stage rank {check.rank} < {check.n_levels} outcome levels"
        )
    if oc.exact:
        zeta = _exact_solve(oc.theta.tolist(), list(oc.b))
        if any(z < 0 for z in zeta):
            raise InfeasibleOddsError(f"negative exact response odds: {zeta}")
        resp = [Fraction(1) / (1 + z) for z in zeta]
        return OddsSolution(
            zeta=np.array(zeta, dtype=object),
            response_prob=np.array(resp, dtype=object),
            residual=0.0,
            clamped=(),
        )
    zeta, *_ = np.linalg.lstsq(oc.theta, oc.b, rcond=None)
    bad = np.where(zeta < -tol)[0]
    if bad.size:
        raise InfeasibleOddsError(
            f"response odds negative beyond tolerance at levels {bad.tolist()}: "
            f"{zeta[bad]}"
        )
    clamped = tuple(int(i) for i in np.where((zeta < 0) & (zeta >= -tol))[0])
    zeta = np.maximum(zeta, 0.0)
    residual = float(np.linalg.norm(oc.theta @ zeta - oc.b))
    return OddsSolution(
        zeta=zeta, response_prob=1.0 / (1.0 + zeta), residual=residual, clamped=clamped
    )


def identify_outcome_distribution(
    oc: ObservedConditionals, odds: OddsSolution
) -> IdentifiedDistribution:
    """Convert observed cell fractions to the full-data outcome law.

    Each complete-case fraction is inflated by (1 + zeta) for its outcome
    level; rows are renormalized to sum to one, and a raw row sum farther
    than 0.05 from one is flagged as a model-inconsistency diagnostic.
    """
    raw = oc.theta * (1 + odds.zeta)[None, :]
    sums = raw.sum(axis=1)
    if oc.exact:
        if any(s == 0 for s in sums):
            raise RankDeficientError("identified row has zero mass")
        probs = np.array(
            [[v / s for v in row] for row, s in zip(raw.tolist(), sums.tolist())],
            dtype=object,
        )
        flagged = tuple(i for i, s in enumerate(sums.tolist()) if abs(s - 1) > Fraction(1, 20))
        return IdentifiedDistribution(probs, sums, flagged)
    if np.any(sums <= 0):
        raise RankDeficientError("identified row has zero mass")
    probs = raw / sums[:, None]
    flagged = tuple(int(i) for i in np.where(np.abs(sums - 1.0) > 0.05)[0])
    return IdentifiedDistribution(probs, np.asarray(sums, dtype=float), flagged)


def _level_row(oc: ObservedConditionals, value: float) -> int:
    for j, lvl in enumerate(oc.instrument_levels):
        if lvl == value:
            return j
    raise MisscateError(
        f"instrument level {value:g} not present among {oc.instrument_levels}"
    )


def _independence_pvalue(
    d: Dataset, x: Sequence[float], y_levels: tuple[float, ...] = (0.0, 1.0)
) -> float:
    """Chi-square p-value for outcome/treatment independence among complete
    cases in the covariate cell; sparse degenerate tables count as independent."""
    cols = as_columns(d)
    m = (
        (cols.rt == 1)
        & (cols.ry == 1)
        & np.all(cols.rx == 1, axis=1)
        & np.all(cols.x == np.asarray(x, dtype=float), axis=1)
    )
    t_levels = np.unique(cols.t[m])
    table = np.array(
        [
            [np.sum(m & (cols.t == tv) & (cols.y == yv)) for yv in y_levels]
            for tv in t_levels
        ]
    )
    table = table[table.sum(axis=1) > 0][:, :]
    keep_cols = table.sum(axis=0) > 0
    table = table[:, keep_cols]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False).pvalue)


def cate_discrete(
    d: Dataset,
    assumption: MissingnessAssumption,
    x: Sequence[float],
    t1: float,
    t0: float,
    *,
    alpha: float = 0.05,
    tol: float = 1e-8,
) -> CateEstimate:
    """Identified stratum effect at covariate profile x for discrete data.

    Under the treatment-independent mechanism the treatment is the
    instrument; a rank failure there is tested against the observable
    no-effect condition (outcome independent of treatment among complete
    cases in the cell) and, when compatible, the exact zero effect is
    returned with a flag instead of an error.  Under the covariate-independent
    mechanism the identifying covariate is the instrument and the system is
    solved once per treatment arm; rank failure in that direction carries no
    null-effect interpretation and is an error.
    """
    x = tuple(float(v) for v in x)
    kind = assumption.kind
    details: dict = {"null_identified": False, "warnings": []}
    if kind is Mechanism.TREATMENT_INDEPENDENT:
        oc = estimate_observed_conditionals(d, InstrumentRole.TREATMENT, x)
        details["warnings"].extend(oc.warnings)
        check = completeness_rank_check(oc, tol=tol)
        details["rank"] = check.rank
        # Completeness is a statistical regime, not a machine-precision one:
        # sampling noise keeps the empirical system numerically full rank even
        # when outcome and treatment are independent, so the no-effect escape
        # is decided by the independence test, not the rank alone.
        pval = _independence_pvalue(d, x, tuple(oc.outcome_levels))
        details["independence_pvalue"] = pval
        if pval >= alpha:
            details["null_identified"] = True
            return CateEstimate(0.0, t1, t0, x, "discrete", details=details)
        if not check.complete:
            raise RankDeficientError(
                "rank-deficient system with treatment-dependent outcome: "
                "the effect is not point identified"
            )
        odds = solve_response_odds(oc, tol=tol)
        ident = identify_outcome_distribution(oc, odds)
        details["flagged_rows"] = ident.flagged_rows
        details["clamped"] = odds.clamped
        y = np.asarray(oc.outcome_levels)
        j1, j0 = _level_row(oc, t1), _level_row(oc, t0)
        tau = float(y @ (ident.probs[j1] - ident.probs[j0]))
        return CateEstimate(tau, t1, t0, x, "discrete", details=details)
    if kind is Mechanism.COVARIATE_INDEPENDENT:
        idx = assumption.identifying_index(d.p)
        x_rest = tuple(v for j, v in enumerate(x) if j != idx)
        means = []
        for tv in (t1, t0):
            oc = estimate_observed_conditionals(
                d,
                InstrumentRole.COVARIATE,
                (tv, x_rest),
                identifying_covariate_index=idx,
            )
            details["warnings"].extend(oc.warnings)
            odds = solve_response_odds(oc, tol=tol)
            ident = identify_outcome_distribution(oc, odds)
            row = _level_row(oc, x[idx])
            y = np.asarray(oc.outcome_levels)
            means.append(float(y @ ident.probs[row]))
        return CateEstimate(means[0] - means[1], t1, t0, x, "discrete", details=details)
    raise ConfigError(
        "discrete identification requires the treatment- or covariate-"
        "independent mechanism"
    )


# ============================================================
# Closed-form non-identification examples (exact arithmetic)
# ============================================================


class Check(NamedTuple):
    name: str
    passed: bool
    expected: object
    actual: object


@dataclass(frozen=True)
class CounterexampleReport:
    name: str
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _fr(a: int, b: int) -> Fraction:
    return Fraction(a, b)


def verify_counterexample_1() -> CounterexampleReport:
    """Two laws, same observables, different average effects.

    Covariate and treatment go missing jointly while the outcome is always
    seen, and the joint response probability depends only on (x, t).  Both
    models share the conditional outcome law, so every stratum effect
    matches, yet the covariate margin differs and the averaged effect moves
    from 3/10 to 0 with no change to anything observable.
    """
    theta = {  # shared P(Y=1 | x, t), keyed by (x, t)
        (0, 0): _fr(1, 5),
        (0, 1): _fr(4, 5),
        (1, 0): _fr(4, 5),
        (1, 1): _fr(1, 5),
    }
    observed_y1 = {(0, 0): _fr(45, 800), (0, 1): _fr(72, 800), (1, 0): _fr(28, 800), (1, 1): _fr(12, 800)}
    observed_y0 = {(0, 0): _fr(180, 800), (0, 1): _fr(18, 800), (1, 0): _fr(7, 800), (1, 1): _fr(48, 800)}
    observed_masked = (_fr(123, 800), _fr(267, 800))  # (y=1, y=0) with (x,t) hidden

    models = {
        "A": {
            "px1": _fr(1, 4),
            "pt1": {0: _fr(1, 4), 1: _fr(3, 4)},
            "resp": {(0, 0): _fr(1, 2), (0, 1): _fr(3, 5), (1, 0): _fr(7, 10), (1, 1): _fr(2, 5)},
            "ate": _fr(3, 10),
        },
        "B": {
            "px1": _fr(1, 2),
            "pt1": {0: _fr(17, 50), 1: _fr(21, 25)},
            "resp": {(0, 0): _fr(75, 88), (0, 1): _fr(45, 68), (1, 0): _fr(35, 64), (1, 1): _fr(5, 28)},
            "ate": Fraction(0),
        },
    }
    checks: list[Check] = []
    for label, m in models.items():
        masked1 = Fraction(0)
        masked0 = Fraction(0)
        for cell in theta:
            xv, tv = cell
            px = m["px1"] if xv == 1 else 1 - m["px1"]
            pt = m["pt1"][xv] if tv == 1 else 1 - m["pt1"][xv]
            joint = px * pt
            pi = m["resp"][cell]
            got1 = joint * theta[cell] * pi
            got0 = joint * (1 - theta[cell]) * pi
            checks.append(
                Check(f"model {label} observed cell (x={xv},t={tv},y=1)", got1 == observed_y1[cell], observed_y1[cell], got1)
            )
            checks.append(
                Check(f"model {label} observed cell (x={xv},t={tv},y=0)", got0 == observed_y0[cell], observed_y0[cell], got0)
            )
            masked1 += joint * theta[cell] * (1 - pi)
            masked0 += joint * (1 - theta[cell]) * (1 - pi)
        checks.append(
            Check(f"model {label} masked mass (y=1)", masked1 == observed_masked[0], observed_masked[0], masked1)
        )
        checks.append(
            Check(f"model {label} masked mass (y=0)", masked0 == observed_masked[1], observed_masked[1], masked0)
        )
        ate = sum(
            (m["px1"] if xv else 1 - m["px1"]) * (theta[(xv, 1)] - theta[(xv, 0)])
            for xv in (0, 1)
        )
        formula = _fr(3, 5) * (1 - 2 * m["px1"])
        checks.append(Check(f"model {label} averaged effect", ate == m["ate"], m["ate"], ate))
        checks.append(Check(f"model {label} closed form (3/5)(1-2 P(x=1))", ate == formula, formula, ate))
    checks.append(
        Check(
            "averaged effects differ across models",
            models["A"]["ate"] != models["B"]["ate"],
            "distinct",
            (models["A"]["ate"], models["B"]["ate"]),
        )
    )
    return CounterexampleReport("joint covariate/treatment nonresponse", tuple(checks))


def verify_counterexample_2() -> CounterexampleReport:
    """Outcome nonresponse depending on everything defeats identification.

    Covariate and treatment are fully observed; the outcome response may
    depend on (x, t, y) jointly.  Two models share the (x, t) margin but
    differ in both the outcome law and the response law, reproduce the same
    twelve observable cell masses, and disagree on every stratum effect.
    """
    px1 = _fr(1, 2)
    pt1 = {0: _fr(1, 4), 1: _fr(3, 4)}
    observed = {  # (x, t) -> (p_y1_obs, p_y0_obs, p_missing), each * 800
        (0, 0): (_fr(30, 800), _fr(192, 800), _fr(78, 800)),
        (0, 1): (_fr(24, 800), _fr(28, 800), _fr(48, 800)),
        (1, 0): (_fr(12, 800), _fr(36, 800), _fr(52, 800)),
        (1, 1): (_fr(126, 800), _fr(81, 800), _fr(93, 800)),
    }
    models = {
        "A": {
            "theta": {(0, 0): _fr(1, 5), (0, 1): _fr(3, 5), (1, 0): _fr(2, 5), (1, 1): _fr(7, 10)},
            "resp": {
                (0, 0, 0): _fr(4, 5), (0, 0, 1): _fr(1, 2),
                (0, 1, 0): _fr(7, 10), (0, 1, 1): _fr(2, 5),
                (1, 0, 0): _fr(3, 5), (1, 0, 1): _fr(3, 10),
                (1, 1, 0): _fr(9, 10), (1, 1, 1): _fr(3, 5),
            },
            "tau": (_fr(2, 5), _fr(3, 10)),
        },
        "B": {
            "theta": {(0, 0): _fr(3, 10), (0, 1): _fr(1, 2), (1, 0): _fr(1, 2), (1, 1): _fr(3, 5)},
            "resp": {
                (0, 0, 0): _fr(32, 35), (0, 0, 1): _fr(1, 3),
                (0, 1, 0): _fr(14, 25), (0, 1, 1): _fr(12, 25),
                (1, 0, 0): _fr(18, 25), (1, 0, 1): _fr(6, 25),
                (1, 1, 0): _fr(27, 40), (1, 1, 1): _fr(7, 10),
            },
            "tau": (_fr(1, 5), _fr(1, 10)),
        },
    }
    checks: list[Check] = []
    for label, m in models.items():
        theta = m["theta"]
        resp = m["resp"]
        for (xv, tv), (e1, e0, emiss) in observed.items():
            px = px1 if xv else 1 - px1
            pt = pt1[xv] if tv else 1 - pt1[xv]
            joint = px * pt
            th = theta[(xv, tv)]
            got1 = joint * th * resp[(xv, tv, 1)]
            got0 = joint * (1 - th) * resp[(xv, tv, 0)]
            gotm = joint * (th * (1 - resp[(xv, tv, 1)]) + (1 - th) * (1 - resp[(xv, tv, 0)]))
            checks.append(Check(f"model {label} cell (x={xv},t={tv}) observed y=1", got1 == e1, e1, got1))
            checks.append(Check(f"model {label} cell (x={xv},t={tv}) observed y=0", got0 == e0, e0, got0))
            checks.append(Check(f"model {label} cell (x={xv},t={tv}) missing mass", gotm == emiss, emiss, gotm))
        for xv in (0, 1):
            tau = theta[(xv, 1)] - theta[(xv, 0)]
            checks.append(
                Check(f"model {label} stratum effect at x={xv}", tau == m["tau"][xv], m["tau"][xv], tau)
            )
    for xv in (0, 1):
        checks.append(
            Check(
                f"stratum effects differ at x={xv}",
                models["A"]["tau"][xv] != models["B"]["tau"][xv],
                "distinct",
                (models["A"]["tau"][xv], models["B"]["tau"][xv]),
            )
        )
    return CounterexampleReport("general outcome nonresponse", tuple(checks))
