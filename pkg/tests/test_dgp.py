"""Benchmark generator: calibration, rates, determinism, effect truths."""

import numpy as np
import pytest
from scipy.special import expit, logit
from scipy.stats import chi2_contingency

from misscate import (
    ConfigError,
    Mechanism,
    MissingnessAssumption,
    VariableKind,
    complete_cases,
    validate_dataset,
)
from misscate.dgp import (
    CalibrationError,
    IndicatorModel,
    ScenarioConfig,
    benchmark_scenario,
    calibrate_intercept,
    calibrate_scenario_intercepts,
    simulate,
    true_cate,
)

B = VariableKind.BINARY
C = VariableKind.CONTINUOUS


def test_calibrate_degenerate_predictor_is_logit():
    c = calibrate_intercept(lambda rng, m: np.zeros(m), 0.8)
    assert c == pytest.approx(logit(0.8), abs=2e-3)
    assert calibrate_intercept(lambda rng, m: np.zeros(m), 0.5) == pytest.approx(
        0.0, abs=2e-3
    )


def test_calibrate_centers_symmetric_predictor():
    c = calibrate_intercept(lambda rng, m: rng.standard_normal(m), 0.5)
    assert c == pytest.approx(0.0, abs=0.01)


def test_calibrate_unreachable_target():
    with pytest.raises(CalibrationError):
        calibrate_intercept(lambda rng, m: 1e9 * np.ones(m), 0.5)


def test_calibrate_input_validation():
    with pytest.raises(ConfigError):
        calibrate_intercept(lambda rng, m: np.zeros(m), 1.5)
    with pytest.raises(ConfigError):
        calibrate_intercept(lambda rng, m: np.zeros(m), 0.8, n_draws=1000)


@pytest.mark.parametrize("mech", ["a1", "a2", "a3"])
@pytest.mark.parametrize("kinds", ["bbb", "ccc", "bcb"])
def test_marginal_response_rates_hit_target(mech, kinds):
    cfg = benchmark_scenario(
        *(B if k == "b" else C for k in kinds), Mechanism.from_token(mech)
    )
    sim = simulate(cfg, 100_000, 123)
    rx = np.array([u.rx[0] for u in sim.observed])
    rt = np.array([u.rt for u in sim.observed])
    ry = np.array([u.ry for u in sim.observed])
    for rate in (rx.mean(), rt.mean(), ry.mean()):
        assert rate == pytest.approx(0.8, abs=0.02)


def test_explicit_intercepts_skip_calibration():
    cfg = ScenarioConfig(
        x_kind=B,
        t_kind=B,
        y_kind=B,
        x_params=(0.5,),
        t_params=(0.0, 0.5),
        y_params=(0.0, 1.0, 0.5, 0.0),
        rx_model=IndicatorModel(2.0),
        rt_model=IndicatorModel(3.0),
        ry_model=IndicatorModel(4.0, on_x=0.5),
        assumption=MissingnessAssumption(Mechanism.OUTCOME_INDEPENDENT),
    )
    assert calibrate_scenario_intercepts(cfg) == (2.0, 3.0, 4.0)


def test_simulate_is_bitwise_deterministic():
    cfg = benchmark_scenario(B, C, C, Mechanism.TREATMENT_INDEPENDENT)
    a = simulate(cfg, 500, 42)
    b = simulate(cfg, 500, 42)
    assert a.observed == b.observed
    assert a.latent == b.latent
    assert a.intercepts == b.intercepts
    assert simulate(cfg, 500, 43).observed != a.observed


def test_latent_is_observed_unmasked():
    cfg = benchmark_scenario(C, B, C, Mechanism.COVARIATE_INDEPENDENT)
    sim = simulate(cfg, 2000, 7)
    assert validate_dataset(sim.observed) == []
    assert validate_dataset(sim.latent) == []
    assert complete_cases(sim.latent).n == 2000
    for uo, ul in zip(sim.observed, sim.latent):
        if uo.rx[0]:
            assert uo.x[0] == ul.x[0]
        if uo.rt:
            assert uo.t == ul.t
        if uo.ry:
            assert uo.y == ul.y


def test_true_cate_closed_forms():
    cont = benchmark_scenario(C, C, C, Mechanism.OUTCOME_INDEPENDENT)
    # Continuous outcome: slope (bt + btx x)(t1 - t0).
    assert true_cate(cont, 0.0, 1.0, 0.0) == pytest.approx(1.0)
    assert true_cate(cont, 2.0, 3.0, 1.0) == pytest.approx((1.0 + 0.5 * 2.0) * 2.0)
    bino = benchmark_scenario(B, B, B, Mechanism.OUTCOME_INDEPENDENT)
    expected = expit(-0.4 + 1.1 + 0.9 + 0.5) - expit(-0.4 + 0.9)
    assert true_cate(bino, 1.0, 1.0, 0.0) == pytest.approx(expected)
    assert expected == pytest.approx(0.268444, abs=1e-6)


def test_null_scenario_zeroes_the_effect():
    cfg = benchmark_scenario(B, B, B, Mechanism.TREATMENT_INDEPENDENT, null_effect=True)
    assert cfg.null_effect
    assert true_cate(cfg, 1.0, 1.0, 0.0) == 0.0
    assert true_cate(cfg, 0.0, 1.0, 0.0) == 0.0
    cont = benchmark_scenario(C, C, C, Mechanism.TREATMENT_INDEPENDENT, null_effect=True)
    assert true_cate(cont, 1.5, 1.0, 0.0) == 0.0
    # Monte Carlo check: within each covariate stratum (X confounds the
    # marginal contrast) the simulated outcome really ignores treatment.
    sim = simulate(cfg, 50_000, 3)
    y = np.array([u.y for u in sim.latent])
    t = np.array([u.t for u in sim.latent])
    x = np.array([u.x[0] for u in sim.latent])
    for xv in (0.0, 1.0):
        m = x == xv
        diff = y[m & (t == 1)].mean() - y[m & (t == 0)].mean()
        assert abs(diff) < 0.02


def test_config_rejects_mismatched_params():
    with pytest.raises(ConfigError, match="x_params"):
        ScenarioConfig(
            x_kind=C,
            t_kind=B,
            y_kind=B,
            x_params=(0.5,),
            t_params=(0.0, 0.5),
            y_params=(0.0, 1.0, 0.5, 0.0),
            rx_model=IndicatorModel(0.0),
            rt_model=IndicatorModel(0.0),
            ry_model=IndicatorModel(0.0),
            assumption=MissingnessAssumption(Mechanism.MCAR),
        )


def test_config_rejects_barred_response_parents():
    kw = dict(
        x_kind=B,
        t_kind=B,
        y_kind=B,
        x_params=(0.5,),
        t_params=(0.0, 0.5),
        y_params=(0.0, 1.0, 0.5, 0.0),
        rx_model=IndicatorModel(0.0),
        rt_model=IndicatorModel(0.0),
    )
    A = MissingnessAssumption
    # Covariate response may not depend on the outcome, under any mechanism.
    with pytest.raises(ConfigError):
        ScenarioConfig(
            **kw | {"rx_model": IndicatorModel(0.0, on_y=1.0)},
            ry_model=IndicatorModel(0.0),
            assumption=A(Mechanism.OUTCOME_INDEPENDENT),
        )
    # Outcome-independent mechanism bars y from the outcome response.
    with pytest.raises(ConfigError):
        ScenarioConfig(
            **kw,
            ry_model=IndicatorModel(0.0, on_y=1.0),
            assumption=A(Mechanism.OUTCOME_INDEPENDENT),
        )
    # Treatment-independent bars t.
    with pytest.raises(ConfigError):
        ScenarioConfig(
            **kw,
            ry_model=IndicatorModel(0.0, on_t=1.0),
            assumption=A(Mechanism.TREATMENT_INDEPENDENT),
        )
    # Covariate-independent bars x.
    with pytest.raises(ConfigError):
        ScenarioConfig(
            **kw,
            ry_model=IndicatorModel(0.0, on_x=1.0),
            assumption=A(Mechanism.COVARIATE_INDEPENDENT),
        )
    # The same slope is fine under a mechanism that does not bar it.
    ScenarioConfig(
        **kw,
        ry_model=IndicatorModel(0.0, on_t=1.0),
        assumption=A(Mechanism.OUTCOME_INDEPENDENT),
    )


def test_null_config_requires_zero_treatment_coefficients():
    with pytest.raises(ConfigError, match="null_effect"):
        ScenarioConfig(
            x_kind=B,
            t_kind=B,
            y_kind=B,
            x_params=(0.5,),
            t_params=(0.0, 0.5),
            y_params=(0.0, 1.0, 0.5, 0.0),
            rx_model=IndicatorModel(0.0),
            rt_model=IndicatorModel(0.0),
            ry_model=IndicatorModel(0.0),
            assumption=MissingnessAssumption(Mechanism.MCAR),
            null_effect=True,
        )


def test_benchmark_grid_rejects_nonidentifying_mechanism():
    with pytest.raises(ConfigError):
        benchmark_scenario(B, B, B, Mechanism.GENERAL)


def test_null_treatment_outcome_independence_given_x():
    # Under the null the outcome model drops t entirely, so (Y, T) are
    # conditionally independent given X in the latent data.
    cfg = benchmark_scenario(B, B, B, Mechanism.TREATMENT_INDEPENDENT, null_effect=True)
    rejections = 0
    for seed in range(20):
        sim = simulate(cfg, 4000, seed)
        y = np.array([u.y for u in sim.latent])
        t = np.array([u.t for u in sim.latent])
        x = np.array([u.x[0] for u in sim.latent])
        for xv in (0.0, 1.0):
            m = x == xv
            table = np.array(
                [
                    [(m & (t == a) & (y == b)).sum() for b in (0.0, 1.0)]
                    for a in (0.0, 1.0)
                ]
            )
            if chi2_contingency(table).pvalue < 0.01:
                rejections += 1
    # 40 level-0.01 tests under the null; a couple of hits is fine.
    assert rejections <= 3
