"""Price-change forecasts from exponentially weighted arrival differences.

With a_t the log of the monthly (state) arrival and P_t the log price,

    A_t      = sum_{i=1..12} a_{t-i+1} w^(i-1)
    A_t^d    = A_t - A_{t-d}
    dP_{t+k} = a0_k + a1_k A_{t+1}^d + a2_k A_t^d + a3_k A_{t-1}^d

for horizons k = 1..3. The A_{t+1}^d regressor is realized arrivals when
fitting and an arrival forecast when predicting. Indices are 0-based months of
the series.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .baselines import arima_fit, arima_forecast
from .data_ingest import MarketSeries, Vector
from .errors import ArrivalcastError, ValidationError
from .forecast_eval import mae
from .regpcr import jittered_solve

logger = logging.getLogger(__name__)

WINDOW = 12
DECAY_GRID = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
PRICE_COLUMNS = ("month", "horizon", "delta_logprice", "price_level")


@dataclass(frozen=True)
class PriceModelConfig:
    w: float = 0.9
    d: int = 12
    horizons: Tuple[int, ...] = (1, 2, 3)
    jitter: float = 1e-10

    def __post_init__(self) -> None:
        if not 0.0 <= self.w < 1.0:
            raise ValidationError("decay w must lie in [0, 1)")
        if self.d < 0:
            raise ValidationError("difference duration d must be nonnegative")
        if not self.horizons or any(k not in (1, 2, 3) for k in self.horizons):
            raise ValidationError("horizons must be a nonempty subset of {1, 2, 3}")

    @property
    def first_row(self) -> int:
        """First origin t whose three regressors all exist."""
        return WINDOW - 1 + self.d + 1


def log_arrivals(arrivals: Vector) -> Tuple[Vector, bool]:
    """Log arrivals, switching to log(1 + a) when a zero is present."""
    arrivals = np.asarray(arrivals, dtype=np.float64)
    shifted = bool((arrivals == 0.0).any())
    return (np.log1p(arrivals) if shifted else np.log(arrivals)), shifted


def weighted_arrival(a: Vector, t: int, w: float) -> float:
    """A_t = sum_{i=1..12} a_{t-i+1} w^(i-1); needs t >= 11."""
    if t < WINDOW - 1 or t >= len(a):
        raise ValidationError(f"weighted arrival at {t} needs {WINDOW} months of history")
    return float(sum(a[t - i + 1] * w ** (i - 1) for i in range(1, WINDOW + 1)))


def weighted_arrivals(a: Vector, w: float) -> Vector:
    """A_t for every t, NaN before the first full window."""
    a = np.asarray(a, dtype=np.float64)
    out = np.full(len(a), np.nan)
    if len(a) >= WINDOW:
        kernel = w ** np.arange(WINDOW, dtype=np.float64)
        out[WINDOW - 1 :] = np.convolve(a, kernel, mode="valid")
    return out


def arrival_difference(A: Vector, t: int, d: int) -> float:
    """A_t - A_{t-d}."""
    if d < 0 or t - d < 0 or t >= len(A) or np.isnan(A[t]) or np.isnan(A[t - d]):
        raise ValidationError(f"arrival difference at {t} with d={d} lacks history")
    return float(A[t] - A[t - d])


def arrival_differences(A: Vector, d: int) -> Vector:
    """A_t^d for every t, NaN where unavailable."""
    A = np.asarray(A, dtype=np.float64)
    out = np.full(len(A), np.nan)
    if d == 0:
        out[~np.isnan(A)] = 0.0
    elif len(A) > d:
        out[d:] = A[d:] - A[:-d]
    return out


def _regressors(D: Vector, t: int) -> Vector:
    return np.array([1.0, D[t + 1], D[t], D[t - 1]])


@dataclass(frozen=True, eq=False)
class PriceModel:
    config: PriceModelConfig
    coefficients: Dict[int, Vector]
    in_sample_mae: Dict[int, float] = field(default_factory=dict)
    degenerate: Dict[int, bool] = field(default_factory=dict)
    shifted: bool = False


def fit_price_model(
    prices: Vector, arrivals: Vector, config: PriceModelConfig = PriceModelConfig()
) -> PriceModel:
    """Least squares of dP_{t+k} on the three arrival differences, per horizon.

    Rank-deficient designs (for instance constant arrivals) are solved with a
    ridge jitter and flagged degenerate.
    """
    prices = np.asarray(prices, dtype=np.float64)
    arrivals = np.asarray(arrivals, dtype=np.float64)
    if prices.shape != arrivals.shape:
        raise ValidationError("price and arrival series differ in length")
    if (prices <= 0.0).any() or (arrivals < 0.0).any():
        raise ValidationError("prices must be positive and arrivals nonnegative")
    if not (np.isfinite(prices).all() and np.isfinite(arrivals).all()):
        raise ValidationError("price model needs gap-free series")
    a, shifted = log_arrivals(arrivals)
    D = arrival_differences(weighted_arrivals(a, config.w), config.d)
    dP = np.diff(np.log(prices), prepend=np.nan)

    coefficients: Dict[int, Vector] = {}
    in_sample: Dict[int, float] = {}
    degenerate: Dict[int, bool] = {}
    N = len(prices)
    for k in config.horizons:
        origins = range(config.first_row, N - k)
        if len(origins) < 4:
            raise ValidationError(
                f"horizon {k}: {N} months leave {max(len(origins), 0)} rows; need 4 "
                f"(at least {config.first_row + k + 4} months)"
            )
        X = np.array([_regressors(D, t) for t in origins])
        y = np.array([dP[t + k] for t in origins])
        full_rank = np.linalg.matrix_rank(X) == X.shape[1]
        if full_rank:
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        else:
            logger.warning("horizon %d: rank-deficient arrival regressors; jittered", k)
            coef = jittered_solve(X, y, config.jitter)
        coefficients[k] = coef
        in_sample[k] = mae(y, X @ coef)
        degenerate[k] = not full_rank
    return PriceModel(
        config=config,
        coefficients=coefficients,
        in_sample_mae=in_sample,
        degenerate=degenerate,
        shifted=shifted,
    )


def forecast_weighted_difference(
    arrivals: Vector, forecast_arrival: float, w: float, d: int
) -> float:
    """A_{t+1}^d with the next month's arrival replaced by its forecast.

    `arrivals` runs through month t on the original scale; the log transform
    follows the history (log(1 + a) when it holds a zero).
    """
    history = np.asarray(arrivals, dtype=np.float64)
    extended = np.append(history, forecast_arrival)
    a = np.log1p(extended) if (history == 0.0).any() else np.log(extended)
    if not np.isfinite(a[-1]):
        raise ValidationError(f"arrival forecast {forecast_arrival} has no logarithm")
    A = weighted_arrivals(a, w)
    return arrival_difference(A, len(extended) - 1, d)


class PriceForecast(NamedTuple):
    horizon: int
    delta_logprice: float
    price_level: float


def predict_price(
    model: PriceModel,
    forecast_difference: float,
    differences: Vector,
    t: int,
    last_price: float,
    horizons: Optional[Sequence[int]] = None,
) -> List[PriceForecast]:
    """dP_{t+k} per horizon and the price level p_t exp(sum_{j<=k} dP_{t+j}).

    `differences` holds realized A^d through month t; `forecast_difference` is
    A_{t+1}^d from an arrival forecast. Levels need every horizon from 1 up.
    """
    horizons = tuple(sorted(model.coefficients if horizons is None else horizons))
    missing = [k for k in range(1, max(horizons) + 1) if k not in model.coefficients]
    if missing:
        raise ValidationError(f"price levels need fitted horizons {missing}")
    if t < 1 or t >= len(differences) or np.isnan(differences[t]) or np.isnan(differences[t - 1]):
        raise ValidationError(f"arrival differences at {t - 1} and {t} are required")
    x = np.array([1.0, forecast_difference, differences[t], differences[t - 1]])
    out = []
    cumulative = 0.0
    for k in range(1, max(horizons) + 1):
        delta = float(model.coefficients[k] @ x)
        cumulative += delta
        if k in horizons:
            out.append(PriceForecast(k, delta, float(last_price * np.exp(cumulative))))
    return out


# State-level series


def state_arrival_series(markets: Sequence[MarketSeries], months: Sequence[str]) -> Vector:
    """Sum of market arrivals per month; NaN where no market reports."""
    table = _table(markets, months, "arrivals")
    total = table.sum(axis=1, min_count=1)
    return total.to_numpy(dtype=np.float64)


def state_price_series(
    markets: Sequence[MarketSeries], months: Sequence[str], weighting: str = "equal"
) -> Vector:
    """Mean market price per month, equal or arrival weighted."""
    prices = _table(markets, months, "prices")
    if weighting == "equal":
        return prices.mean(axis=1).to_numpy(dtype=np.float64)
    if weighting != "arrival":
        raise ValidationError("weighting must be 'equal' or 'arrival'")
    weights = _table(markets, months, "arrivals").where(prices.notna()).fillna(0.0)
    num = (prices.fillna(0.0) * weights).sum(axis=1)
    den = weights.sum(axis=1)
    return (num / den).where(den > 0.0, prices.mean(axis=1)).to_numpy(dtype=np.float64)


def _table(markets: Sequence[MarketSeries], months: Sequence[str], attr: str) -> pd.DataFrame:
    columns = {
        m.market_id: pd.Series(getattr(m, attr), index=list(m.months), dtype=np.float64)
        for m in markets
    }
    return pd.DataFrame(columns, index=list(months), dtype=np.float64)


# Backtests


class PriceBacktestRow(NamedTuple):
    origin: int
    horizon: int
    method: str
    actual_delta: float
    predicted_delta: float
    actual_price: float
    predicted_price: float


@dataclass
class PriceBacktest:
    rows: List[PriceBacktestRow] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)

    def mae(self, method: str, horizon: int, on: str = "delta") -> float:
        """MAE of log-price changes (`on="delta"`) or price levels (`on="price"`)."""
        rows = [r for r in self.rows if r.method == method and r.horizon == horizon]
        if on == "delta":
            return mae([r.actual_delta for r in rows], [r.predicted_delta for r in rows])
        return mae([r.actual_price for r in rows], [r.predicted_price for r in rows])

    def table(self) -> pd.DataFrame:
        """MAE of deltas and levels per (method, horizon)."""
        keys = sorted({(r.method, r.horizon) for r in self.rows})
        return pd.DataFrame(
            [(m, k, self.mae(m, k, "delta"), self.mae(m, k, "price")) for m, k in keys],
            columns=["method", "horizon", "mae_delta", "mae_price"],
        )


def price_backtest(
    prices: Vector,
    arrivals: Vector,
    config: PriceModelConfig = PriceModelConfig(),
    steps: int = 12,
    arrival_forecasts: Optional[Mapping[int, float]] = None,
    include_arima: bool = True,
) -> PriceBacktest:
    """Rolling-origin comparison of the arrival model and ARIMA on log prices.

    The origins are the last `steps` months t that leave room for the longest
    horizon. Without `arrival_forecasts` (month index -> arrival forecast) the
    realized next-month arrival is used.
    """
    prices = np.asarray(prices, dtype=np.float64)
    arrivals = np.asarray(arrivals, dtype=np.float64)
    N = len(prices)
    k_max = max(config.horizons)
    origins = list(range(N - k_max - steps, N - k_max))
    if not origins or origins[0] < 0:
        raise ValidationError(f"{N} months cannot hold {steps} price backtest origins")
    P = np.log(prices)
    result = PriceBacktest()
    horizons = tuple(range(1, k_max + 1))
    for t in origins:
        try:
            model = fit_price_model(prices[: t + 1], arrivals[: t + 1], replace(config, horizons=horizons))
            a, _ = log_arrivals(arrivals[: t + 1])
            D = arrival_differences(weighted_arrivals(a, config.w), config.d)
            nxt = arrivals[t + 1] if arrival_forecasts is None else arrival_forecasts[t + 1]
            Dhat = forecast_weighted_difference(arrivals[: t + 1], nxt, config.w, config.d)
            for f in predict_price(model, Dhat, D, t, prices[t], config.horizons):
                k = f.horizon
                result.rows.append(
                    PriceBacktestRow(t, k, "arrival", P[t + k] - P[t + k - 1], f.delta_logprice, prices[t + k], f.price_level)
                )
        except ArrivalcastError as e:
            result.failures["arrival"] = str(e)
            logger.warning("price model failed at origin %d: %s", t, e)
            break
    if include_arima:
        for t in origins:
            try:
                path = arima_forecast(arima_fit(P[: t + 1]), k_max)
            except ArrivalcastError as e:
                result.failures["arima"] = str(e)
                logger.warning("ARIMA failed at origin %d: %s", t, e)
                break
            levels = np.concatenate([[P[t]], path])
            for k in config.horizons:
                result.rows.append(
                    PriceBacktestRow(
                        t, k, "arima", P[t + k] - P[t + k - 1], levels[k] - levels[k - 1], prices[t + k], float(np.exp(levels[k]))
                    )
                )
    if "arrival" in result.failures:
        result.rows = [r for r in result.rows if r.method != "arrival"]
    if "arima" in result.failures:
        result.rows = [r for r in result.rows if r.method != "arima"]
    return result


def select_decay(
    prices: Vector,
    arrivals: Vector,
    config: PriceModelConfig = PriceModelConfig(),
    grid: Sequence[float] = DECAY_GRID,
    steps: int = 12,
) -> Tuple[float, Dict[float, float]]:
    """Decay w with the lowest one-step dP backtest MAE (smaller w on ties)."""
    scores: Dict[float, float] = {}
    for w in grid:
        run = price_backtest(prices, arrivals, replace(config, w=w, horizons=(1,)), steps, include_arima=False)
        if run.rows:
            scores[w] = run.mae("arrival", 1)
    if not scores:
        raise ValidationError("no decay value could be evaluated")
    best = min(scores, key=lambda w: (scores[w], w))
    logger.info("selected decay w=%g (one-step MAE %.6g)", best, scores[best])
    return best, scores


def forecast_frame(month: str, forecasts: Sequence[PriceForecast]) -> pd.DataFrame:
    """Rows of the price forecast CSV for one origin month."""
    return pd.DataFrame(
        [(month, f.horizon, f.delta_logprice, f.price_level) for f in forecasts],
        columns=list(PRICE_COLUMNS),
    )
