import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdfts.config import RunConfig
from hdfts.errors import ConfigError, InsufficientDataError, StageError
from hdfts.evaluation import expanding_window_eval
from hdfts.forecasting import (
    OrderReducedWarning,
    VarModel,
    bootstrap_from_errors,
    bootstrap_intervals,
    fit_and_forecast,
    fit_model,
    fit_var,
    forecast_factors,
    forecast_var,
    load_forecast_csv,
    reconstruct_curves,
    unvectorize_factors,
    vectorize_factors,
    write_forecast_csv,
)
from hdfts.metrics import rmse_fit
from hdfts.panel import FunctionalPanel
from hdfts.simulate import DgpConfig, ROW1_COEF, simulate_dgp, simulate_var1

from oracles import reconstruct_loop, var_aic_loop, var_forecast_power


@pytest.mark.invariant
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 6))
def test_vectorize_round_trip(r, k, t):
    f = np.random.default_rng(r * 100 + k * 10 + t).normal(size=(t, r, k))
    v = vectorize_factors(f)
    assert v.shape == (t, r * k)
    np.testing.assert_array_equal(unvectorize_factors(v, r, k), f)
    # column-major: the first r entries are the first column
    np.testing.assert_array_equal(v[:, :r], f[:, :, 0])


def test_var_recovers_coefficients():
    rng = np.random.default_rng(11)
    y = simulate_var1(ROW1_COEF, np.eye(2), 2000, 100, rng)
    m = fit_var(y, max_order=5)
    np.testing.assert_allclose(m.coefs[0], ROW1_COEF, atol=0.05)


def test_var_deterministic(rng):
    y = rng.normal(size=(80, 3)).cumsum(axis=0)
    a, b = fit_var(y, 4), fit_var(y, 4)
    np.testing.assert_array_equal(a.coefs, b.coefs)
    assert a.order == b.order and a.aic == b.aic


@pytest.mark.oracle
def test_white_noise_selects_order_one():
    ok = 0
    for rep in range(100):
        y = np.random.default_rng(rep).standard_normal((1000, 4))
        m = fit_var(y, 3)
        ok += m.order == 1 and np.abs(m.coefs).max() < 0.1
    assert ok >= 90


@pytest.mark.oracle
def test_aic_matches_independent_formula(rng):
    y = rng.normal(size=(120, 3)).cumsum(axis=0) * 0.1 + rng.normal(size=(120, 3))
    m = fit_var(y, 4)
    assert m.aic == pytest.approx(var_aic_loop(y, m.order), abs=1e-8)
    assert 1 <= m.order <= 4
    # selection compares orders on a common sample
    for p, value in m.aic_by_order.items():
        assert value == pytest.approx(var_aic_loop(y[4 - p:], p), abs=1e-8)


@pytest.mark.invariant
def test_sigma_symmetric_psd(rng):
    m = fit_var(rng.normal(size=(50, 4)), 3)
    np.testing.assert_allclose(m.sigma, m.sigma.T, atol=1e-12)
    assert np.linalg.eigvalsh(m.sigma).min() >= -1e-8


def test_order_reduced_for_short_series(rng):
    with pytest.warns(OrderReducedWarning):
        m = fit_var(rng.normal(size=(12, 4)), 5)
    assert m.order_reduced
    assert m.order <= 2


def test_var_too_short():
    with pytest.raises(InsufficientDataError):
        fit_var(np.zeros((5, 4)), 1)


def _model(coefs, intercept):
    coefs = np.asarray(coefs, float)
    d = coefs.shape[-1]
    return VarModel(coefs.shape[0], coefs, np.asarray(intercept, float), np.eye(d), 0.0, 10)


def test_zero_model_forecasts_zero():
    f = forecast_var(_model(np.zeros((1, 2, 2)), [0, 0]), np.ones((3, 2)), 4)
    assert np.all(f == 0)


def test_scalar_geometric():
    f = forecast_var(_model([[[0.5]]], [0.0]), np.array([[1.0]]), 3)
    np.testing.assert_allclose(f[:, 0], [0.5, 0.25, 0.125])


@pytest.mark.oracle
def test_matrix_power_oracle(rng):
    for _ in range(10):
        a = rng.normal(size=(2, 2))
        a *= 0.9 / max(abs(np.linalg.eigvals(a)))
        x = rng.normal(size=2)
        f = forecast_var(_model([a], [0, 0]), x[None], 8)
        for h in range(1, 9):
            np.testing.assert_allclose(f[h - 1], var_forecast_power(a, x, h), atol=1e-10)


def test_forecast_factors_shape():
    model = _model(0.5 * np.eye(4)[None], np.zeros(4))
    last = np.arange(4.0).reshape(2, 2, order="F")
    out = forecast_factors(model, last[None], 2)
    assert out.shape == (2, 2, 2)
    np.testing.assert_allclose(out[1], 0.25 * last)


def test_reconstruct_trivial():
    means = np.full((3, 5), 2.0)
    out = reconstruct_curves(means, np.zeros((2, 5)), np.zeros((2, 2)), np.zeros((3, 2, 5)))
    np.testing.assert_array_equal(out, means)
    out = reconstruct_curves(means, np.ones((1, 5)), np.array([[1.5]]), np.ones((3, 1, 5)))
    np.testing.assert_allclose(out, means + 1.5)


@pytest.mark.oracle
def test_reconstruct_loop(rng):
    means = rng.normal(size=(4, 7))
    front = rng.normal(size=(3, 7))
    f = rng.normal(size=(3, 2))
    lam = rng.normal(size=(4, 2, 7))
    np.testing.assert_allclose(reconstruct_curves(means, front, f, lam),
                               reconstruct_loop(means, front, f, lam), atol=1e-12)


@pytest.mark.invariant
@given(st.integers(0, 2**31 - 1))
def test_reconstruct_linear(seed):
    rng = np.random.default_rng(seed)
    means, front, lam = rng.normal(size=(3, 6)), rng.normal(size=(2, 6)), rng.normal(size=(3, 2, 6))
    f1, f2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    lhs = reconstruct_curves(means, front, f1 + f2, lam) - means
    rhs = (reconstruct_curves(means, front, f1, lam) - means) + (reconstruct_curves(means, front, f2, lam) - means)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_reconstruct_shape_mismatch():
    with pytest.raises(ConfigError):
        reconstruct_curves(np.zeros((3, 5)), np.zeros((2, 5)), np.zeros((2, 2)), np.zeros((3, 3, 5)))


def test_constant_panel_forecasts_constant():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(5, 1, 101))
    vals = np.repeat(base, 20, axis=1)
    bundle = fit_and_forecast(FunctionalPanel.from_array(vals), RunConfig(), 3)
    np.testing.assert_allclose(bundle.point, np.repeat(base, 3, axis=1), atol=1e-6)


def test_stage_error_names_stage():
    with pytest.raises(StageError, match=r"\[center\]") as info:
        fit_model(np.zeros((3, 1, 11)))
    assert info.value.code == "insufficient_data"


@pytest.mark.oracle
def test_noiseless_stable_forecast_accuracy():
    panel, _ = simulate_dgp(DgpConfig(N=20, T=150, noise_sd=0.0, seed=1, stable_row2=True))
    model = fit_model(panel, RunConfig(), fit_var_model=False)
    fit_rmse = rmse_fit(panel.values, model.fitted_values())
    report = expanding_window_eval(panel, RunConfig(), n0=140, Hmax=1, intervals=False)
    assert report.rmsfe_pooled[0] < 3 * fit_rmse


def test_bootstrap_zero_errors():
    point = np.random.default_rng(1).normal(size=(2, 3, 5))
    errors = {h: np.zeros((12, 2, 5)) for h in (1, 2, 3)}
    lo, hi, pooled = bootstrap_from_errors(point, errors, 0.2, 100, 0)
    np.testing.assert_array_equal(lo, point)
    np.testing.assert_array_equal(hi, point)
    assert pooled == ()


@pytest.mark.oracle
def test_bootstrap_two_point():
    point = np.zeros((1, 1, 4))
    e = np.concatenate([-np.ones((20, 1, 4)), np.ones((20, 1, 4))])
    lo, hi, _ = bootstrap_from_errors(point, {1: e}, 0.2, 5000, 3)
    np.testing.assert_allclose(lo, -1.0, atol=0.05)
    np.testing.assert_allclose(hi, 1.0, atol=0.05)


def test_bootstrap_b_too_small():
    with pytest.raises(ConfigError):
        bootstrap_from_errors(np.zeros((1, 1, 2)), {1: np.zeros((10, 1, 2))}, 0.2, 10, 0)


def test_bootstrap_pools_neighbours():
    point = np.zeros((1, 3, 2))
    errors = {1: np.ones((12, 1, 2)), 2: np.ones((3, 1, 2)), 3: np.ones((1, 1, 2))}
    _, _, pooled = bootstrap_from_errors(point, errors, 0.2, 50, 0, min_count=10)
    assert pooled == (2, 3)


@pytest.mark.invariant
@given(st.integers(0, 2**31 - 1))
def test_bootstrap_deterministic_and_nested(seed):
    rng = np.random.default_rng(seed)
    point = rng.normal(size=(2, 2, 6))
    errors = {h: rng.normal(size=(15, 2, 6)) for h in (1, 2)}
    a = bootstrap_from_errors(point, errors, 0.2, 200, seed)
    b = bootstrap_from_errors(point, errors, 0.2, 200, seed)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    wide = bootstrap_from_errors(point, errors, 0.1, 200, seed)
    assert np.all(wide[0] <= a[0]) and np.all(wide[1] >= a[1])
    assert np.all(a[0] <= a[1])


@pytest.fixture(scope="module")
def small_panel():
    panel, _ = simulate_dgp(DgpConfig(N=20, T=30, seed=5))
    return panel


def test_bootstrap_intervals_bundle(small_panel, tmp_path):
    cfg = RunConfig(B=100, Hmax=3)
    bundle = bootstrap_intervals(small_panel, cfg)
    assert bundle.point.shape == (20, 3, 101)
    assert np.all(bundle.lower <= bundle.upper)
    for h in (1, 2, 3):
        assert bundle.insample_errors[h].shape[0] >= 10 or h in bundle.pooled
    path = tmp_path / "f.csv"
    write_forecast_csv(bundle, path)
    back = load_forecast_csv(path)
    np.testing.assert_allclose(back.point, bundle.point, rtol=1e-12)
    np.testing.assert_allclose(back.upper, bundle.upper, rtol=1e-12)
    assert back.origin == 30
    assert back.target_periods() == [31, 32, 33]


@pytest.mark.invariant
def test_bootstrap_parallel_equals_serial(small_panel):
    a = bootstrap_intervals(small_panel, RunConfig(B=50, Hmax=2, threads=1))
    b = bootstrap_intervals(small_panel, RunConfig(B=50, Hmax=2, threads=3))
    np.testing.assert_array_equal(a.lower, b.lower)
    np.testing.assert_array_equal(a.upper, b.upper)
    np.testing.assert_array_equal(a.point, b.point)
