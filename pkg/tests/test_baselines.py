import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats, integers, lists

from arrivalcast import ValidationError, testing
from arrivalcast.baselines import (
    arima_fit,
    arima_forecast,
    difference,
    pcr_fit,
    pcr_predict,
    ridge_fit,
    ridge_predict,
    undifference,
)

from .strategies import assert_allclose, assert_close, seeds, small_floats


def system(seed: int, T: int, L: int) -> tuple:
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((T, L))
    return X, 0.5 + X @ rng.standard_normal(L) + 0.1 * rng.standard_normal(T)


@pytest.mark.baselines
@pytest.mark.parametrize("seed", range(5))
def test_ridge_matches_closed_form(seed: int) -> None:
    X, y = system(seed, 30, 8)
    model = ridge_fit(X, y, 0.3)
    b0, b = testing.ridge(X, y, 0.3)
    assert_close(model.beta0, b0, 1e-10)
    assert_allclose(model.beta, b, 1e-10)


@pytest.mark.baselines
def test_ridge_dual_form_agrees_with_primal() -> None:
    X, y = system(3, 10, 40)
    model = ridge_fit(X, y, 0.2)
    b0, b = testing.ridge(X, y, 0.2)
    assert_allclose(model.beta, b, 1e-8)
    assert_close(model.beta0, b0, 1e-8)
    np.testing.assert_allclose(ridge_predict(model, X), b0 + X @ b, atol=1e-8)


@pytest.mark.baselines
def test_ridge_zero_penalty_is_ols_and_rejects_singular() -> None:
    X, y = system(1, 25, 4)
    model = ridge_fit(X, y, 0.0)
    b0, b = testing.ols(X, y)
    assert_allclose(model.beta, b, 1e-10)
    with pytest.raises(ValidationError, match="singular"):
        ridge_fit(np.column_stack([X, X[:, 0]]), y, 0.0)
    with pytest.raises(ValidationError):
        ridge_fit(X, y, -1.0)


@pytest.mark.baselines
def test_pcr_with_all_factors_is_ols() -> None:
    X, y = system(2, 30, 5)
    model = pcr_fit(X, y, 5)
    b0, b = testing.ols(X, y)
    np.testing.assert_allclose(pcr_predict(model, X), b0 + X @ b, atol=1e-8)
    assert pcr_predict(model, X[0]).shape == ()


@pytest.mark.baselines
@given(lists(floats(min_value=-100.0, max_value=100.0, allow_nan=False), min_size=3, max_size=20), integers(0, 2))
def test_undifference_inverts_difference(values: list, d: int) -> None:
    y = np.array(values)
    w, tails = difference(y, d)
    assert len(w) == len(y) - d
    # Integrating the next differences of the series itself gives the series back.
    extended = np.append(y, [y[-1] + 1.0, y[-1] - 2.0])
    future, _ = difference(extended, d)
    np.testing.assert_allclose(undifference(future[-2:], tails), extended[-2:], atol=1e-8)


@pytest.mark.baselines
def test_ar1_recovery() -> None:
    y = 0.5 ** np.arange(20.0) * 4.0
    model = arima_fit(y)
    assert (model.p, model.d, model.q) == (1, 0, 0)
    assert_close(model.phi[0], 0.5, 1e-8)
    assert_close(model.intercept, 0.0, 1e-8)
    np.testing.assert_allclose(arima_forecast(model, 3), y[-1] * 0.5 ** np.arange(1.0, 4.0), atol=1e-8)


@pytest.mark.baselines
def test_linear_trend_continues() -> None:
    y = 2.0 + 3.0 * np.arange(15.0)
    model = arima_fit(y)
    future = arima_forecast(model, 4)
    np.testing.assert_allclose(future, 2.0 + 3.0 * np.arange(15.0, 19.0), atol=1e-8)
    fixed = arima_fit(y, order=(0, 1, 0))
    assert (fixed.p, fixed.d, fixed.q) == (0, 1, 0)
    assert_close(fixed.intercept, 3.0, 1e-10)
    np.testing.assert_allclose(arima_forecast(fixed, 2), [47.0, 50.0], atol=1e-8)


@pytest.mark.baselines
def test_arima_order_search_is_deterministic() -> None:
    rng = np.random.Generator(np.random.PCG64(12))
    e = rng.standard_normal(60)
    y = np.zeros(60)
    for t in range(1, 60):
        y[t] = 0.6 * y[t - 1] + e[t] + 0.4 * e[t - 1]
    first = arima_fit(y)
    second = arima_fit(y)
    assert (first.p, first.d, first.q) == (second.p, second.d, second.q)
    assert first.aic == second.aic
    assert first.p <= 3 and first.d <= 2 and first.q <= 1
    assert np.all(np.isfinite(arima_forecast(first, 5)))


@pytest.mark.baselines
def test_arima_rejects_short_or_bad_input() -> None:
    with pytest.raises(ValidationError, match="too short"):
        arima_fit(np.arange(11.0))
    with pytest.raises(ValidationError):
        arima_fit(np.array([1.0, np.nan] * 10))
    with pytest.raises(ValidationError):
        arima_fit(np.arange(30.0), order=(4, 0, 0))
    with pytest.raises(ValidationError):
        arima_forecast(arima_fit(np.arange(30.0)), 0)


@pytest.mark.baselines
@given(seeds, small_floats, floats(min_value=0.0, max_value=10.0))
def test_ridge_ignores_a_shift_of_the_response(seed: int, shift: float, lam: float) -> None:
    X, y = system(seed % 1000, 25, 6)
    model = ridge_fit(X, y, lam)
    moved = ridge_fit(X, y + shift, lam)
    assert_allclose(moved.beta, model.beta, 1e-8)
    assert_close(moved.beta0, model.beta0 + shift, 1e-8)


def arma_series(seed: int, n: int = 60) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    e = rng.standard_normal(n)
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.6 * y[t - 1] + e[t] + 0.4 * e[t - 1]
    return 10.0 + y


@pytest.mark.baselines
@given(floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=25)
def test_arima_order_does_not_depend_on_units(unit: float) -> None:
    y = arma_series(12)
    model = arima_fit(y)
    scaled = arima_fit(unit * y)
    assert (scaled.p, scaled.d, scaled.q) == (model.p, model.d, model.q)
    np.testing.assert_allclose(arima_forecast(scaled, 3), unit * arima_forecast(model, 3), rtol=1e-7)
