"""Rolling-origin backtests, MAE tables and the state aggregation regression."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import baselines, regpcr
from .data_ingest import Matrix, PathLike, Vector
from .errors import ArrivalcastError, ValidationError
from .regpcr import DesignMatrix, RegPcrConfig, arrival_response, jittered_solve
from .special import f_sf

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("market_id", "method", "month", "actual", "predicted")
RESERVED_METHODS = ("random_forest", "gradient_boosting")


def mae(actual: Vector, predicted: Vector) -> float:
    """Mean absolute error."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ValidationError(f"length mismatch: {actual.shape} vs {predicted.shape}")
    if actual.size == 0:
        raise ValidationError("MAE of empty vectors")
    return float(np.abs(actual - predicted).mean())


# Methods


@dataclass(frozen=True)
class BacktestConfig:
    """Rolling-origin protocol and per-method settings.

    With `refit` off the RegPCR model is fit once on the initial window and
    reused for every step.
    """

    initial_window: int = 24
    steps: int = 12
    methods: Tuple[str, ...] = ("regpcr", "ridge", "pcr", "arima")
    refit: bool = True
    regpcr: RegPcrConfig = RegPcrConfig()
    ridge_lambdas: Tuple[float, ...] = tuple(float(v) for v in np.geomspace(1e2, 1e-6, 17))
    pcr_factors: int = 10
    cv_folds: int = 3

    def __post_init__(self) -> None:
        if self.initial_window < 2:
            raise ValidationError("initial_window must be at least 2")
        if self.steps < 1:
            raise ValidationError("steps must be at least 1")
        unknown = [m for m in self.methods if m not in methods]
        if unknown:
            raise ValidationError(f"unknown methods {unknown}; known: {sorted(methods)}")


Forecaster = Callable[[DesignMatrix, Vector, BacktestConfig], float]


def _regpcr(train: DesignMatrix, x_next: Vector, config: BacktestConfig) -> float:
    model = regpcr.fit(train, config.regpcr)
    return float(regpcr.predict(model, x_next))


def select_ridge_lambda(
    X: Matrix, y: Vector, lambdas: Sequence[float], cv_folds: int = 3
) -> float:
    """Ridge penalty with the smallest rolling-origin one-step MAE (larger on ties)."""
    T = len(y)
    folds = min(cv_folds, T - 2)
    if folds < 1:
        return float(lambdas[0])
    scores = []
    for lam in lambdas:
        errors = []
        for origin in range(T - folds, T):
            model = baselines.ridge_fit(X[:origin], y[:origin], lam)
            errors.append(abs(float(baselines.ridge_predict(model, X[origin])) - y[origin]))
        scores.append(np.mean(errors))
    return float(lambdas[int(np.argmin(scores))])


def _ridge(train: DesignMatrix, x_next: Vector, config: BacktestConfig) -> float:
    lam = select_ridge_lambda(train.X, train.y, config.ridge_lambdas, config.cv_folds)
    model = baselines.ridge_fit(train.X, train.y, lam)
    return float(arrival_response(baselines.ridge_predict(model, x_next), train.shifted))


def _pcr(train: DesignMatrix, x_next: Vector, config: BacktestConfig) -> float:
    k = min(config.pcr_factors, train.T - 1, train.L)
    model = baselines.pcr_fit(train.X, train.y, k)
    return float(arrival_response(baselines.pcr_predict(model, x_next), train.shifted))


def _arima(train: DesignMatrix, x_next: Vector, config: BacktestConfig) -> float:
    model = baselines.arima_fit(train.y)
    return float(arrival_response(baselines.arima_forecast(model, 1)[0], train.shifted))


methods: Dict[str, Forecaster] = {
    "regpcr": _regpcr,
    "ridge": _ridge,
    "pcr": _pcr,
    "arima": _arima,
}


# Reports


class ForecastRow(NamedTuple):
    market_id: str
    method: str
    month: str
    actual: float
    predicted: float


@dataclass
class BacktestReport:
    """Per (market, method) one-step forecasts on the original arrival scale."""

    rows: List[ForecastRow] = field(default_factory=list)
    failures: Dict[Tuple[str, str], str] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        """Rows as a DataFrame sorted by market, method and month."""
        frame = pd.DataFrame(self.rows, columns=list(REPORT_COLUMNS))
        return frame.sort_values(["market_id", "method", "month"], kind="mergesort").reset_index(drop=True)

    def mae_table(self) -> pd.DataFrame:
        """MAE per market (rows) and method (columns)."""
        frame = self.frame()
        if frame.empty:
            return pd.DataFrame()
        frame["error"] = (frame["actual"] - frame["predicted"]).abs()
        return frame.pivot_table(index="market_id", columns="method", values="error", aggfunc="mean")

    def winners(self) -> Dict[str, str]:
        """Method with the lowest MAE per market (alphabetical on ties)."""
        table = self.mae_table()
        table = table[sorted(table.columns)]
        return {str(m): str(row.idxmin()) for m, row in table.iterrows() if row.notna().any()}

    def mean_mae(self) -> Dict[str, float]:
        """Mean of the per-market MAEs of every method."""
        table = self.mae_table()
        return {str(k): float(v) for k, v in table.mean(axis=0).sort_index().items()}

    def check_alignment(self) -> None:
        """Every cell of a market must cover the same evaluation months."""
        frame = self.frame()
        for market_id, group in frame.groupby("market_id"):
            months = {m: tuple(g["month"]) for m, g in group.groupby("method")}
            if len(set(months.values())) > 1:
                raise ValidationError(f"market {market_id}: methods cover different months")

    def merge(self, other: BacktestReport) -> BacktestReport:  # noqa: D102
        return BacktestReport(
            rows=self.rows + other.rows, failures={**self.failures, **other.failures}
        )

    def summary(self) -> Dict[str, object]:
        """JSON-ready per-method MAE, winners and aggregate means."""
        table = self.mae_table()
        return {
            "mae": {
                str(market): {str(k): float(v) for k, v in row.dropna().sort_index().items()}
                for market, row in table.iterrows()
            },
            "winners": self.winners(),
            "mean_mae": self.mean_mae(),
            "failures": [
                {"market_id": m, "method": k, "error": e} for (m, k), e in sorted(self.failures.items())
            ],
        }

    def write_csv(self, path: PathLike) -> None:  # noqa: D102
        self.frame().to_csv(path, index=False, lineterminator="\n")

    def write_json(self, path: PathLike) -> None:  # noqa: D102
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8")


def rolling_backtest(
    design: DesignMatrix,
    market_id: str,
    config: BacktestConfig = BacktestConfig(),
    forecasters: Optional[Mapping[str, Forecaster]] = None,
) -> BacktestReport:
    """Expanding-window one-step backtest of every configured method on one market.

    Step s trains on the first `initial_window + s` rows and predicts the next
    one. A method that raises on any step is recorded under `failures` and
    contributes no rows.
    """
    if forecasters is None:
        forecasters = {name: methods[name] for name in config.methods}
    names = list(forecasters)
    if config.initial_window + config.steps > design.T:
        raise ValidationError(
            f"market {market_id}: {design.T} months cannot hold initial window "
            f"{config.initial_window} plus {config.steps} steps"
        )

    report = BacktestReport()
    once: Optional[regpcr.RegPcrModel] = None
    for name in names:
        forecast = forecasters[name]
        rows = []
        try:
            for s in range(config.steps):
                target = config.initial_window + s
                train = design.rows(target)
                month = design.month_labels[target]
                assert max(train.month_labels) < month, "training rows reach the target month"
                x_next = design.X[target]
                if name == "regpcr" and not config.refit and forecast is _regpcr:
                    once = once or regpcr.fit(train, config.regpcr)
                    predicted = float(regpcr.predict(once, x_next))
                else:
                    predicted = forecast(train, x_next, config)
                if not np.isfinite(predicted):
                    raise ArrivalcastError("non-finite prediction")
                rows.append(ForecastRow(market_id, name, month, float(design.arrivals[target]), predicted))
        except (ArrivalcastError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning("market %s: method %s failed: %s", market_id, name, e)
            report.failures[(market_id, name)] = str(e)
            continue
        report.rows.extend(rows)
        logger.info(
            "market %s: %s MAE %.6g",
            market_id,
            name,
            mae([r.actual for r in rows], [r.predicted for r in rows]),
        )
    return report


def run_backtest(
    designs: Mapping[str, DesignMatrix], config: BacktestConfig = BacktestConfig()
) -> BacktestReport:
    """Backtest every market (in id order) and merge the results."""
    report = BacktestReport()
    for market_id in sorted(designs):
        report = report.merge(rolling_backtest(designs[market_id], market_id, config))
    report.check_alignment()
    return report


def merge_external_predictions(report: BacktestReport, path: PathLike) -> BacktestReport:
    """Add rows of externally computed methods (random forest, gradient boosting).

    The CSV uses the report schema. Every external cell must cover exactly the
    months already evaluated for its market.
    """
    try:
        frame = pd.read_csv(path, dtype={"market_id": str, "method": str, "month": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"{path}: {e}") from e
    if tuple(frame.columns) != REPORT_COLUMNS:
        raise ValidationError(f"{path}: header must be {','.join(REPORT_COLUMNS)}")
    unknown = sorted(set(frame["method"]) - set(RESERVED_METHODS))
    if unknown:
        raise ValidationError(f"{path}: methods {unknown} are not reserved external methods")

    existing = report.frame()
    expected = {
        str(m): tuple(g.drop_duplicates("month")["month"]) for m, g in existing.groupby("market_id")
    }
    for (market_id, method), group in frame.groupby(["market_id", "method"]):
        months = tuple(sorted(group["month"]))
        if months != expected.get(market_id):
            raise ValidationError(
                f"{path}: {method} for market {market_id} does not cover the evaluated months"
            )
    rows = [
        ForecastRow(str(r.market_id), str(r.method), str(r.month), float(r.actual), float(r.predicted))
        for r in frame.itertuples(index=False)
    ]
    return replace(report, rows=report.rows + rows)


# State aggregation


def adjusted_r2(r2: float, n: int, p: int) -> float:
    """1 - (1 - R^2)(n - 1)/(n - p - 1)."""
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def f_statistic(r2: float, n: int, p: int) -> float:
    """Overall regression F = (R^2/p) / ((1 - R^2)/(n - p - 1))."""
    if r2 >= 1.0:
        return float("inf")
    return (r2 / p) / ((1.0 - r2) / (n - p - 1))


@dataclass(frozen=True, eq=False)
class StateAggModel:
    market_ids: Tuple[str, ...]
    alpha0: float
    alpha: Vector
    r2: float
    adjusted_r2: float
    f_stat: float
    p_value: float
    n: int
    jittered: bool = False

    def coefficients(self) -> Dict[str, float]:  # noqa: D102
        return {m: float(a) for m, a in zip(self.market_ids, self.alpha)}


def fit_state_aggregate(
    market_arrivals: Mapping[str, Vector], state_total: Vector, jitter: float = 1e-10
) -> StateAggModel:
    """OLS of the state total on market arrivals with an intercept.

    Collinear markets are handled with a ridge jitter and flagged.
    """
    ids = tuple(sorted(market_arrivals))
    y = np.asarray(state_total, dtype=np.float64)
    M = np.column_stack([np.asarray(market_arrivals[m], dtype=np.float64) for m in ids]) if ids else np.zeros((len(y), 0))
    n, p = M.shape
    if p < 1:
        raise ValidationError("state aggregation needs at least one market")
    if M.shape[0] != len(y):
        raise ValidationError("market and state series differ in length")
    if n < p + 2:
        raise ValidationError(f"need at least {p + 2} months for {p} markets, got {n}")
    if not (np.isfinite(M).all() and np.isfinite(y).all()):
        raise ValidationError("non-finite arrival in state aggregation")

    A = np.column_stack([np.ones(n), M])
    jittered = np.linalg.matrix_rank(A) < A.shape[1]
    if jittered:
        logger.warning("collinear market arrivals; applying ridge jitter %g", jitter)
        coef = jittered_solve(A, y, jitter)
    else:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0.0 else 1.0
    r2 = min(r2, 1.0)
    f_stat = f_statistic(r2, n, p)
    return StateAggModel(
        market_ids=ids,
        alpha0=float(coef[0]),
        alpha=coef[1:],
        r2=r2,
        adjusted_r2=adjusted_r2(r2, n, p),
        f_stat=f_stat,
        p_value=f_sf(f_stat, p, n - p - 1),
        n=n,
        jittered=bool(jittered),
    )


def predict_state(model: StateAggModel, market_predictions: Mapping[str, Vector]) -> Vector:
    """State total from (predicted) market arrivals."""
    missing = [m for m in model.market_ids if m not in market_predictions]
    if missing:
        raise ValidationError(f"missing predictions for markets {missing}")
    M = np.column_stack([np.atleast_1d(np.asarray(market_predictions[m], dtype=np.float64)) for m in model.market_ids])
    return model.alpha0 + M @ model.alpha


@dataclass(frozen=True, eq=False)
class StateBacktest:
    model: StateAggModel
    months: Tuple[str, ...]
    actual: Vector
    predicted: Vector

    @property
    def mae(self) -> float:  # noqa: D102
        return mae(self.actual, self.predicted)


def state_backtest(
    report: BacktestReport,
    months: Sequence[str],
    market_arrivals: Mapping[str, Vector],
    state_total: Vector,
    method: str = "regpcr",
) -> StateBacktest:
    """Fit the aggregation on actual arrivals before the evaluation months, then
    predict the state total from the method's market forecasts."""
    frame = report.frame()
    frame = frame[(frame["method"] == method) & frame["market_id"].isin(list(market_arrivals))]
    predicted = frame.pivot(index="month", columns="market_id", values="predicted").dropna()
    if predicted.empty or set(predicted.columns) != set(market_arrivals):
        raise ValidationError(f"no {method} forecasts for all of {sorted(market_arrivals)}")
    first = predicted.index.min()
    position = {m: i for i, m in enumerate(months)}
    total = np.asarray(state_total, dtype=np.float64)

    fit_rows = [i for m, i in position.items() if m < first]
    history = {k: np.asarray(v, dtype=np.float64)[fit_rows] for k, v in market_arrivals.items()}
    usable = np.isfinite(total[fit_rows]) & np.all([np.isfinite(v) for v in history.values()], axis=0)
    model = fit_state_aggregate({k: v[usable] for k, v in history.items()}, total[fit_rows][usable])

    eval_months = tuple(m for m in predicted.index if m in position)
    estimate = predict_state(model, {k: predicted.loc[list(eval_months), k].to_numpy() for k in market_arrivals})
    actual = total[[position[m] for m in eval_months]]
    return StateBacktest(model=model, months=eval_months, actual=actual, predicted=estimate)
