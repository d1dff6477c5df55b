import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats

from arrivalcast import ValidationError
from arrivalcast.data_ingest import MarketSeries, month_range
from arrivalcast.price_model import (
    PriceModel,
    PriceModelConfig,
    arrival_differences,
    fit_price_model,
    forecast_frame,
    forecast_weighted_difference,
    log_arrivals,
    predict_price,
    price_backtest,
    select_decay,
    state_arrival_series,
    state_price_series,
    weighted_arrival,
    weighted_arrivals,
)
from arrivalcast.synth import SynthConfig, generate, state_price_path

from .strategies import assert_allclose, assert_close

COEFS = (0.004, -0.06, 0.035, 0.015)


def planted(k: int, n: int = 60, seed: int = 3, w: float = 0.9) -> tuple:
    rng = np.random.Generator(np.random.PCG64(seed))
    arrivals = np.exp(9.0 + 0.5 * rng.standard_normal(n))
    config = SynthConfig(price_coefs=(COEFS, COEFS, COEFS), price_horizon=k, w=w)
    prices = np.exp(state_price_path(arrivals, config, np.zeros(n)))
    return prices, arrivals


@pytest.mark.price
def test_weighted_arrival_matches_convolution() -> None:
    a = np.random.Generator(np.random.PCG64(1)).uniform(5.0, 9.0, 30)
    A = weighted_arrivals(a, 0.8)
    assert np.isnan(A[:11]).all()
    for t in range(11, 30):
        assert_close(weighted_arrival(a, t, 0.8), A[t], 1e-10)
    assert_close(weighted_arrivals(np.ones(12), 0.5)[-1], (1.0 - 0.5**12) / 0.5, 1e-12)
    # w = 0 keeps only the current month.
    np.testing.assert_allclose(weighted_arrivals(a, 0.0)[11:], a[11:])
    with pytest.raises(ValidationError):
        weighted_arrival(a, 10, 0.8)


@pytest.mark.price
def test_arrival_differences() -> None:
    A = np.array([np.nan, 1.0, 3.0, 6.0])
    np.testing.assert_array_equal(arrival_differences(A, 2)[3], 5.0)
    assert np.isnan(arrival_differences(A, 2)[:3]).all()
    np.testing.assert_array_equal(arrival_differences(A, 0)[1:], 0.0)
    values, shifted = log_arrivals(np.array([0.0, np.e - 1.0]))
    assert shifted
    assert_allclose(values, [0.0, 1.0], 1e-12)


@pytest.mark.price
@pytest.mark.parametrize("k", [1, 2, 3])
def test_recovers_planted_coefficients(k: int) -> None:
    prices, arrivals = planted(k)
    model = fit_price_model(prices, arrivals, PriceModelConfig(w=0.9, d=12, horizons=(k,)))
    assert_allclose(model.coefficients[k], COEFS, 1e-8)
    assert model.in_sample_mae[k] < 1e-10
    assert not model.degenerate[k]


@pytest.mark.price
@pytest.mark.parametrize("k", [1, 2, 3])
def test_recovers_coefficients_from_synthetic_markets(k: int) -> None:
    dataset, truth = generate(SynthConfig(seed=5, grid_rows=4, grid_cols=5, months=60, price_horizon=k))
    months = dataset.month_index[1:]
    prices = state_price_series(dataset.markets, months)
    arrivals = state_arrival_series(dataset.markets, months)
    model = fit_price_model(prices, arrivals, PriceModelConfig(w=truth.w, d=truth.d, horizons=(k,)))
    assert_allclose(model.coefficients[k], truth.price_coefs[k], 1e-8)


@pytest.mark.price
def test_short_series() -> None:
    prices, arrivals = planted(3, n=31)
    fit_price_model(prices, arrivals)
    with pytest.raises(ValidationError, match="need 4"):
        fit_price_model(prices[:30], arrivals[:30])
    with pytest.raises(ValidationError):
        fit_price_model(prices, arrivals[:-1])
    with pytest.raises(ValidationError):
        fit_price_model(-prices, arrivals)


@pytest.mark.price
def test_no_differencing_is_degenerate() -> None:
    prices, arrivals = planted(1, n=30)
    model = fit_price_model(prices, arrivals, PriceModelConfig(d=0, horizons=(1,)))
    assert model.degenerate[1]
    assert np.isfinite(model.coefficients[1]).all()


@pytest.mark.price
def test_forecast_difference_uses_forecast_as_next_month() -> None:
    prices, arrivals = planted(1)
    a, _ = log_arrivals(arrivals)
    D = arrival_differences(weighted_arrivals(a, 0.9), 12)
    for t in (30, 45, 58):
        assert_close(forecast_weighted_difference(arrivals[: t + 1], arrivals[t + 1], 0.9, 12), D[t + 1], 1e-10)


@pytest.mark.price
def test_predicted_levels_compound() -> None:
    model = PriceModel(
        config=PriceModelConfig(),
        coefficients={k: np.array([0.01 * k, 0.0, 0.0, 0.0]) for k in (1, 2, 3)},
    )
    D = np.zeros(5)
    forecasts = predict_price(model, 0.0, D, 4, 100.0)
    assert [f.horizon for f in forecasts] == [1, 2, 3]
    assert_allclose([f.delta_logprice for f in forecasts], [0.01, 0.02, 0.03], 1e-15)
    assert_allclose([f.price_level for f in forecasts], 100.0 * np.exp([0.01, 0.03, 0.06]), 1e-10)
    assert [f.horizon for f in predict_price(model, 0.0, D, 4, 100.0, horizons=(3,))] == [3]

    partial = PriceModel(config=PriceModelConfig(horizons=(2,)), coefficients={2: np.zeros(4)})
    with pytest.raises(ValidationError, match="fitted horizons"):
        predict_price(partial, 0.0, D, 4, 100.0)
    with pytest.raises(ValidationError):
        predict_price(model, 0.0, np.array([np.nan] * 5), 4, 100.0)

    frame = forecast_frame("2020-05", forecasts)
    assert list(frame.columns) == ["month", "horizon", "delta_logprice", "price_level"]
    assert list(frame["month"]) == ["2020-05"] * 3


@pytest.mark.price
def test_state_series() -> None:
    months = month_range("2020-01", "2020-03")
    a = MarketSeries("A", "A", 15.0, 75.0, months, np.array([1.0, 1.0, 2.0]), np.array([100.0, 100.0, 300.0]))
    b = MarketSeries("B", "B", 15.0, 75.0, months[:2], np.array([3.0, 1.0]), np.array([200.0, 300.0]))
    np.testing.assert_allclose(state_arrival_series([a, b], months), [4.0, 2.0, 2.0])
    np.testing.assert_allclose(state_price_series([a, b], months), [150.0, 200.0, 300.0])
    np.testing.assert_allclose(state_price_series([a, b], months, "arrival"), [175.0, 200.0, 300.0])
    with pytest.raises(ValidationError):
        state_price_series([a, b], months, "median")


@pytest.mark.price
def test_backtest_on_planted_law() -> None:
    prices, arrivals = planted(1)
    result = price_backtest(prices, arrivals, PriceModelConfig(horizons=(1,)), steps=12)
    assert not result.failures
    assert {r.origin for r in result.rows} == set(range(47, 59))
    assert result.mae("arrival", 1) < 1e-8
    assert result.mae("arrival", 1, on="price") < 1e-4
    assert result.mae("arima", 1) > result.mae("arrival", 1)
    table = result.table()
    assert list(table["method"]) == ["arima", "arrival"]

    forecasts = {t: arrivals[t] * 1.5 for t in range(len(arrivals))}
    biased = price_backtest(prices, arrivals, PriceModelConfig(horizons=(1,)), 12, forecasts, include_arima=False)
    assert biased.mae("arrival", 1) > result.mae("arrival", 1)
    with pytest.raises(ValidationError, match="cannot hold"):
        price_backtest(prices[:10], arrivals[:10], steps=12)


@pytest.mark.price
def test_backtest_records_short_history() -> None:
    prices, arrivals = planted(1, n=34)
    result = price_backtest(prices, arrivals, PriceModelConfig(horizons=(1,)), steps=8, include_arima=False)
    assert "arrival" in result.failures
    assert not result.rows


@pytest.mark.price
def test_select_decay_finds_planted_value() -> None:
    prices, arrivals = planted(1, n=72, w=0.8)
    w, scores = select_decay(prices, arrivals, steps=10)
    assert w == 0.8
    assert scores[0.8] == min(scores.values())
    assert len(scores) == 10


@pytest.mark.price
@given(floats(min_value=1e-3, max_value=1e3), floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=25)
def test_units_do_not_change_coefficients(price_unit: float, arrival_unit: float) -> None:
    prices, arrivals = planted(2, seed=8)
    noisy = prices * np.exp(0.01 * np.random.Generator(np.random.PCG64(8)).standard_normal(len(prices)))
    config = PriceModelConfig(w=0.9, d=12, horizons=(1, 2, 3))
    model = fit_price_model(noisy, arrivals, config)
    rescaled = fit_price_model(price_unit * noisy, arrival_unit * arrivals, config)
    for k in (1, 2, 3):
        assert_allclose(rescaled.coefficients[k], model.coefficients[k], 1e-7)


@pytest.mark.price
@pytest.mark.parametrize("unit", [1.0, 1e6])
def test_degenerate_fit_keeps_the_mean_change(unit: float) -> None:
    prices, arrivals = planted(1, n=30)
    config = PriceModelConfig(d=0, horizons=(1,))
    model = fit_price_model(unit * prices, unit * arrivals, config)
    changes = np.diff(np.log(prices))[config.first_row : len(prices) - 1]
    assert model.degenerate[1]
    assert_allclose(model.coefficients[1], [changes.mean(), 0.0, 0.0, 0.0], 1e-8)


@pytest.mark.price
@pytest.mark.slow
def test_error_grows_with_horizon_over_ten_seeds() -> None:
    growing = 0
    for seed in range(10):
        config = SynthConfig(seed=seed, grid_rows=5, grid_cols=5, months=72, price_noise=0.01)
        dataset, truth = generate(config)
        months = dataset.month_index[1:]
        prices = state_price_series(dataset.markets, months)
        arrivals = state_arrival_series(dataset.markets, months)
        run = price_backtest(prices, arrivals, PriceModelConfig(w=truth.w, d=truth.d), steps=12, include_arima=False)
        assert not run.failures
        growing += run.mae("arrival", 3) >= run.mae("arrival", 1)
    assert growing >= 7
