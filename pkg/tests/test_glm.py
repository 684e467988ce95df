"""GLM fitters against closed forms and a generic optimizer oracle."""

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from misscate.glm import FitError, fit_gamma_log, fit_gaussian, fit_logistic


def design(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([np.ones(n), rng.normal(size=n), rng.integers(0, 2, n)])


def test_gaussian_noiseless_is_exact():
    rng = np.random.default_rng(0)
    X = design(50, rng)
    beta = np.array([1.0, -2.0, 0.5])
    fit = fit_gaussian(X, X @ beta)
    assert np.allclose(fit.coef, beta, atol=1e-10)
    assert fit.scale == pytest.approx(1e-6, abs=1e-6)  # floored variance


def test_gaussian_weights_replicate_rows():
    rng = np.random.default_rng(1)
    X = design(40, rng)
    y = X @ np.array([0.3, 1.0, -1.0]) + rng.normal(size=40)
    w = rng.integers(1, 4, size=40).astype(float)
    rep = np.repeat(np.arange(40), w.astype(int))
    fit_w = fit_gaussian(X, y, weights=w)
    fit_r = fit_gaussian(X[rep], y[rep])
    assert np.allclose(fit_w.coef, fit_r.coef, atol=1e-10)
    assert fit_w.scale == pytest.approx(fit_r.scale, abs=1e-10)
    assert fit_w.loglik == pytest.approx(fit_r.loglik, abs=1e-6)


def test_gaussian_offset_shifts_response():
    rng = np.random.default_rng(2)
    X = design(30, rng)
    y = rng.normal(size=30)
    off = rng.normal(size=30)
    assert np.allclose(
        fit_gaussian(X, y, offset=off).coef, fit_gaussian(X, y - off).coef
    )


def test_logistic_matches_generic_optimizer():
    rng = np.random.default_rng(3)
    X = design(400, rng)
    beta = np.array([-0.5, 1.2, 0.8])
    y = (rng.random(400) < expit(X @ beta)).astype(float)
    w = rng.uniform(0.5, 2.0, size=400)

    def nll(b):
        eta = X @ b
        return -(w @ (y * eta - np.logaddexp(0.0, eta)))

    oracle = minimize(nll, np.zeros(3), method="BFGS", tol=1e-12).x
    fit = fit_logistic(X, y, weights=w)
    assert fit.converged
    assert np.allclose(fit.coef, oracle, atol=1e-6)


def test_logistic_fractional_responses():
    # EM feeds fractional y; the score solution matches an aggregated fit.
    X = np.array([[1.0, 0.0], [1.0, 1.0]])
    y = np.array([0.25, 0.75])
    fit = fit_logistic(X, y)
    p = expit(X @ fit.coef)
    assert np.allclose(p, y, atol=1e-8)


def test_logistic_offset():
    rng = np.random.default_rng(4)
    X = design(300, rng)
    off = 0.7 * rng.normal(size=300)
    y = (rng.random(300) < expit(X @ [0.2, -1.0, 0.5] + off)).astype(float)

    def nll(b):
        eta = X @ b + off
        return -np.sum(y * eta - np.logaddexp(0.0, eta))

    oracle = minimize(nll, np.zeros(3), method="BFGS", tol=1e-12).x
    assert np.allclose(fit_logistic(X, y, offset=off).coef, oracle, atol=1e-6)


def test_logistic_separation_raises_without_clip():
    x = np.linspace(-2, 2, 20)
    X = np.column_stack([np.ones(20), x])
    y = (x > 0).astype(float)
    with pytest.raises(FitError, match="separation"):
        fit_logistic(X, y)


def test_logistic_quasi_separation_raises():
    # Gradient tolerance is reachable at huge slopes; the divergence guard
    # must still classify the fit as failed.
    x = np.concatenate([np.linspace(-2, -0.1, 10), np.linspace(0.1, 2, 10)])
    X = np.column_stack([np.ones(20), x])
    y = (x > 0).astype(float)
    with pytest.raises(FitError, match="separation"):
        fit_logistic(X, y)


def test_logistic_separation_clips_instead():
    x = np.linspace(-2, 2, 20)
    X = np.column_stack([np.ones(20), x])
    y = (x > 0).astype(float)
    fit = fit_logistic(X, y, clip=5.0)
    assert fit.clipped
    assert np.all(np.abs(fit.coef) <= 5.0 + 1e-9)


def test_logistic_warm_start_converges_faster():
    rng = np.random.default_rng(5)
    X = design(500, rng)
    y = (rng.random(500) < expit(X @ [0.4, -0.9, 1.1])).astype(float)
    cold = fit_logistic(X, y)
    warm = fit_logistic(X, y, start=cold.coef)
    assert warm.n_iter <= 2
    assert np.allclose(warm.coef, cold.coef, atol=1e-7)


def test_rank_deficient_design_raises():
    X = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    y = np.zeros(10)
    with pytest.raises(FitError, match="rank deficient"):
        fit_gaussian(X, y)
    with pytest.raises(FitError, match="rank deficient"):
        fit_logistic(X, y)


def test_zero_weight_rows_are_ignored():
    rng = np.random.default_rng(6)
    X = design(60, rng)
    y = (rng.random(60) < 0.5).astype(float)
    w = np.ones(60)
    w[40:] = 0.0
    a = fit_logistic(X, y, weights=w)
    b = fit_logistic(X[:40], y[:40])
    assert np.allclose(a.coef, b.coef, atol=1e-8)


def test_negative_weight_rejected():
    X = np.ones((3, 1))
    with pytest.raises(FitError, match="negative"):
        fit_gaussian(X, np.zeros(3), weights=np.array([1.0, -1.0, 1.0]))


def test_gamma_log_recovers_coefficients():
    rng = np.random.default_rng(7)
    X = design(20000, rng)
    beta = np.array([0.5, 0.3, -0.4])
    shape = 3.0
    mu = np.exp(X @ beta)
    y = rng.gamma(shape, mu / shape)
    fit = fit_gamma_log(X, y)
    assert fit.converged
    assert np.allclose(fit.coef, beta, atol=0.05)
    assert fit.scale == pytest.approx(shape, rel=0.15)


def test_gamma_rejects_nonpositive_response():
    X = np.ones((4, 1))
    with pytest.raises(FitError, match="positive"):
        fit_gamma_log(X, np.array([1.0, 2.0, 0.0, 3.0]))


def test_gamma_matches_generic_optimizer():
    rng = np.random.default_rng(8)
    X = design(300, rng)
    y = rng.gamma(2.0, np.exp(X @ [0.2, 0.5, -0.3]) / 2.0)

    def nll(b):
        eta = X @ b
        return float(np.sum(eta + y * np.exp(-eta)))  # quasi-loglik, shape-free

    oracle = minimize(nll, np.zeros(3), method="BFGS", tol=1e-12).x
    assert np.allclose(fit_gamma_log(X, y).coef, oracle, atol=1e-6)
