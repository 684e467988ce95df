"""Discrete identification: tabulation, rank, odds system, stratum effects."""

from fractions import Fraction

import numpy as np
import pytest

from misscate import (
    ConfigError,
    Dataset,
    Mechanism,
    MissingnessAssumption,
    Unit,
    VariableKind,
)
from misscate.dgp import benchmark_scenario, simulate, true_cate
from misscate.discrete import (
    InfeasibleOddsError,
    InstrumentRole,
    InsufficientVariationError,
    ObservedConditionals,
    RankDeficientError,
    cate_discrete,
    completeness_rank_check,
    estimate_observed_conditionals,
    identify_outcome_distribution,
    solve_response_odds,
    verify_counterexample_1,
    verify_counterexample_2,
)

B = VariableKind.BINARY


def unit(x, t, y):
    return Unit(
        (x,) if x is not None else (None,),
        t,
        y,
        (1,) if x is not None else (0,),
        1 if t is not None else 0,
        1 if y is not None else 0,
    )


def hand_dataset() -> Dataset:
    # Cell x=1: at t=0 four units (y = 0, 0, 1, missing); at t=1 four units
    # (y = 1, 1, 1, missing).  Rows outside the cell or with x/t missing are
    # padding that tabulation must ignore.
    units = (
        unit(1.0, 0.0, 0.0),
        unit(1.0, 0.0, 0.0),
        unit(1.0, 0.0, 1.0),
        unit(1.0, 0.0, None),
        unit(1.0, 1.0, 1.0),
        unit(1.0, 1.0, 1.0),
        unit(1.0, 1.0, 1.0),
        unit(1.0, 1.0, None),
        unit(0.0, 0.0, 1.0),
        unit(None, 1.0, 0.0),
        unit(1.0, None, 0.0),
    )
    return Dataset(units, (B,), B, B)


def test_tabulation_matches_hand_counts():
    oc = estimate_observed_conditionals(hand_dataset(), InstrumentRole.TREATMENT, (1.0,))
    assert oc.instrument_levels == (0.0, 1.0)
    assert oc.outcome_levels == (0.0, 1.0)
    assert np.allclose(oc.theta, [[2 / 4, 1 / 4], [0.0, 3 / 4]])
    assert np.allclose(oc.b, [1 / 4, 1 / 4])
    assert oc.warnings == ()
    assert not oc.exact


def test_tabulation_covariate_role():
    # Same data viewed with X as the instrument inside the t=0 cell.
    oc = estimate_observed_conditionals(
        hand_dataset(), InstrumentRole.COVARIATE, (0.0, ())
    )
    assert oc.instrument_levels == (0.0, 1.0)
    assert np.allclose(oc.theta[1], [2 / 4, 1 / 4])  # x=1 row as above
    assert np.allclose(oc.theta[0], [0.0, 1.0])      # single x=0 unit, y=1


def test_tabulation_input_validation():
    d = hand_dataset()
    with pytest.raises(ConfigError, match="binary outcome"):
        estimate_observed_conditionals(
            Dataset(d.units, (B,), B, VariableKind.CONTINUOUS),
            InstrumentRole.TREATMENT,
            (1.0,),
        )
    with pytest.raises(ConfigError, match="length 1"):
        estimate_observed_conditionals(d, InstrumentRole.TREATMENT, (1.0, 0.0))
    with pytest.raises(ConfigError, match="binary to instrument"):
        estimate_observed_conditionals(
            Dataset(d.units, (VariableKind.CONTINUOUS,), B, B),
            InstrumentRole.COVARIATE,
            (0.0, ()),
        )
    with pytest.raises(ConfigError, match="out of range"):
        estimate_observed_conditionals(
            d, InstrumentRole.COVARIATE, (0.0, ()), identifying_covariate_index=2
        )


def test_single_instrument_level_raises():
    units = tuple(unit(1.0, 1.0, float(i % 2)) for i in range(6))
    d = Dataset(units, (B,), B, B)
    with pytest.raises(InsufficientVariationError):
        estimate_observed_conditionals(d, InstrumentRole.TREATMENT, (1.0,))


def test_empty_cell_level_raises_with_context():
    # Both treatment levels exist overall but only t=1 has units at x=1.
    units = (
        unit(1.0, 1.0, 0.0),
        unit(1.0, 1.0, 1.0),
        unit(0.0, 0.0, 1.0),
        unit(0.0, 0.0, 0.0),
    )
    d = Dataset(units, (B,), B, B)
    with pytest.raises(InsufficientVariationError, match="1 instrument level"):
        estimate_observed_conditionals(d, InstrumentRole.TREATMENT, (1.0,))


def oc_from(theta, b, exact=False) -> ObservedConditionals:
    if exact:
        theta = np.array([[Fraction(v) for v in row] for row in theta], dtype=object)
        b = np.array([Fraction(v) for v in b], dtype=object)
    else:
        theta = np.asarray(theta, dtype=float)
        b = np.asarray(b, dtype=float)
    J = theta.shape[0]
    return ObservedConditionals(
        theta, b, tuple(float(j) for j in range(J)), (0.0, 1.0)
    )


def test_rank_check_examples():
    assert completeness_rank_check(oc_from([[0.3, 0.2], [0.1, 0.4]], [0, 0])).complete
    chk = completeness_rank_check(oc_from([[0.3, 0.2], [0.6, 0.4]], [0, 0]))
    assert not chk.complete and chk.rank == 1
    assert completeness_rank_check(
        oc_from([[0.2, 0.2], [0.2, 0.2]], [0, 0])
    ).rank == 1
    # Exact arithmetic sees through near-dependence that floats cannot.
    exact = oc_from(
        [[Fraction(1, 3), Fraction(1, 6)], [Fraction(2, 3), Fraction(1, 3)]],
        [0, 0],
        exact=True,
    )
    assert completeness_rank_check(exact).rank == 1


def forward_system(P, pi):
    # P rows are the full-data outcome law per instrument level; pi is the
    # response probability per outcome level.  Returns the observables.
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    theta = P * pi[None, :]
    b = P @ (1 - pi)
    return theta, b


def test_solve_recovers_known_odds():
    P = [[0.3, 0.7], [0.6, 0.4]]
    pi = np.array([0.8, 0.5])
    theta, b = forward_system(P, pi)
    sol = solve_response_odds(oc_from(theta, b))
    assert np.allclose(sol.zeta, (1 - pi) / pi, atol=1e-12)
    assert np.allclose(sol.response_prob, pi, atol=1e-12)
    assert sol.residual < 1e-12
    assert sol.clamped == ()
    ident = identify_outcome_distribution(oc_from(theta, b), sol)
    assert np.allclose(ident.probs, P, atol=1e-12)
    assert ident.flagged_rows == ()


def test_solve_exact_fractions():
    P = [[Fraction(3, 10), Fraction(7, 10)], [Fraction(3, 5), Fraction(2, 5)]]
    pi = [Fraction(4, 5), Fraction(1, 2)]
    theta = np.array(
        [[p * q for p, q in zip(row, pi)] for row in P], dtype=object
    )
    b = np.array([sum(p * (1 - q) for p, q in zip(row, pi)) for row in P], dtype=object)
    oc = ObservedConditionals(theta, b, (0.0, 1.0), (0.0, 1.0))
    assert oc.exact
    sol = solve_response_odds(oc)
    assert list(sol.zeta) == [Fraction(1, 4), Fraction(1, 1)]
    ident = identify_outcome_distribution(oc, sol)
    assert [list(r) for r in ident.probs] == [list(r) for r in P]


def test_solve_no_missingness_gives_zero_odds():
    theta = np.array([[0.3, 0.7], [0.6, 0.4]])
    sol = solve_response_odds(oc_from(theta, [0.0, 0.0]))
    assert np.allclose(sol.zeta, 0.0)
    ident = identify_outcome_distribution(oc_from(theta, [0.0, 0.0]), sol)
    assert np.allclose(ident.probs, theta)  # rows already sum to one


def test_solve_rank_deficient_raises():
    with pytest.raises(RankDeficientError):
        solve_response_odds(oc_from([[0.3, 0.2], [0.6, 0.4]], [0.1, 0.2]))


def test_solve_infeasible_raises():
    theta = np.array([[0.5, 0.2], [0.2, 0.5]])
    b = theta @ np.array([-0.2, 0.9])
    with pytest.raises(InfeasibleOddsError):
        solve_response_odds(oc_from(theta, b))


def test_solve_snaps_rounding_noise():
    theta = np.array([[0.5, 0.2], [0.2, 0.5]])
    b = theta @ np.array([-1e-10, 0.5])
    sol = solve_response_odds(oc_from(theta, b))
    assert sol.zeta[0] == 0.0
    assert sol.clamped == (0,)


def test_identify_flags_inconsistent_rows():
    theta = np.array([[0.5, 0.2], [0.2, 0.5]])
    sol = solve_response_odds(oc_from(theta, theta @ np.array([0.1, 0.2])))
    bad = oc_from(theta * 0.8, theta @ np.array([0.1, 0.2]))  # rows undershoot 1
    ident = identify_outcome_distribution(bad, sol)
    assert ident.flagged_rows == (0, 1)
    assert np.allclose(ident.probs.sum(axis=1), 1.0)


def test_overdetermined_system_least_squares():
    # Three instrument levels, two outcome levels: consistent system solves.
    P = [[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]]
    pi = np.array([0.8, 0.5])
    theta, b = forward_system(P, pi)
    sol = solve_response_odds(oc_from(theta, b))
    assert np.allclose(sol.zeta, (1 - pi) / pi, atol=1e-10)


def test_cate_discrete_fully_observed_is_plugin():
    units = []
    # x=1 cell: P(Y=1|t=0) = 1/4, P(Y=1|t=1) = 3/4, nothing missing.  Counts
    # are large enough that the no-effect screen rejects independence.
    units += [unit(1.0, 0.0, 1.0)] * 10 + [unit(1.0, 0.0, 0.0)] * 30
    units += [unit(1.0, 1.0, 1.0)] * 90 + [unit(1.0, 1.0, 0.0)] * 30
    d = Dataset(tuple(units), (B,), B, B)
    est = cate_discrete(d, MissingnessAssumption(Mechanism.TREATMENT_INDEPENDENT), (1.0,), 1.0, 0.0)
    assert est.tau == pytest.approx(0.5, abs=1e-12)
    assert not est.details["null_identified"]
    assert est.estimator == "discrete"


def test_cate_discrete_recovers_truth_a2():
    cfg = benchmark_scenario(B, B, B, Mechanism.TREATMENT_INDEPENDENT)
    sim = simulate(cfg, 100_000, 0)
    est = cate_discrete(
        sim.observed, MissingnessAssumption(Mechanism.TREATMENT_INDEPENDENT), (1.0,), 1.0, 0.0
    )
    assert est.tau == pytest.approx(true_cate(cfg, 1.0, 1.0, 0.0), abs=0.03)
    assert not est.details["null_identified"]
    assert est.details["independence_pvalue"] < 0.05


def test_cate_discrete_recovers_truth_a3():
    cfg = benchmark_scenario(B, B, B, Mechanism.COVARIATE_INDEPENDENT)
    sim = simulate(cfg, 100_000, 0)
    est = cate_discrete(
        sim.observed, MissingnessAssumption(Mechanism.COVARIATE_INDEPENDENT), (1.0,), 1.0, 0.0
    )
    assert est.tau == pytest.approx(true_cate(cfg, 1.0, 1.0, 0.0), abs=0.03)


def test_cate_discrete_null_is_flagged_zero():
    cfg = benchmark_scenario(
        B, B, B, Mechanism.TREATMENT_INDEPENDENT, null_effect=True
    )
    sim = simulate(cfg, 100_000, 2)
    est = cate_discrete(
        sim.observed, MissingnessAssumption(Mechanism.TREATMENT_INDEPENDENT), (1.0,), 1.0, 0.0
    )
    assert est.details["null_identified"]
    assert est.details["independence_pvalue"] >= 0.05
    assert est.tau == 0.0


def test_cate_discrete_row_order_invariant():
    cfg = benchmark_scenario(B, B, B, Mechanism.TREATMENT_INDEPENDENT)
    sim = simulate(cfg, 5000, 1)
    a = MissingnessAssumption(Mechanism.TREATMENT_INDEPENDENT)
    fwd = cate_discrete(sim.observed, a, (1.0,), 1.0, 0.0)
    perm = sim.observed.take(list(reversed(range(sim.observed.n))))
    rev = cate_discrete(perm, a, (1.0,), 1.0, 0.0)
    assert fwd.tau == rev.tau


def test_cate_discrete_rejects_other_mechanisms():
    d = hand_dataset()
    for mech in (Mechanism.MCAR, Mechanism.OUTCOME_INDEPENDENT, Mechanism.GENERAL):
        with pytest.raises(ConfigError):
            cate_discrete(d, MissingnessAssumption(mech), (1.0,), 1.0, 0.0)


def test_counterexample_reports_pass():
    r1 = verify_counterexample_1()
    assert r1.passed, [c for c in r1.checks if not c.passed]
    # The same observables support averaged effects 3/10 and 0.
    effects = next(
        c.actual for c in r1.checks if c.name == "averaged effects differ across models"
    )
    assert effects == (Fraction(3, 10), Fraction(0))
    r2 = verify_counterexample_2()
    assert r2.passed, [c for c in r2.checks if not c.passed]
    taus = [
        c.actual
        for c in r2.checks
        if c.name.startswith("stratum effects differ")
    ]
    assert taus == [
        (Fraction(2, 5), Fraction(1, 5)),
        (Fraction(3, 10), Fraction(1, 10)),
    ]
    # Every check in both reports carries exact expected/actual values.
    for rep in (r1, r2):
        assert all(c.expected is not None for c in rep.checks)
