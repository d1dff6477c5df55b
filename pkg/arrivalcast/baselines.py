"""Comparison forecasters: ridge regression, plain principal-component
regression and a small ARIMA fitted by least squares."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import pca
from .data_ingest import Matrix, Vector
from .errors import ValidationError
from .regpcr import least_squares

logger = logging.getLogger(__name__)


# Ridge


@dataclass(frozen=True, eq=False)
class RidgeModel:
    beta0: float
    beta: Vector
    lam: float


def ridge_fit(X: Matrix, y: Vector, lam: float) -> RidgeModel:
    """Solve (Xc'Xc/T + lam I) b = Xc'yc/T on centered data; b0 = mean(y) - mean(X)'b.

    With more columns than rows (and lam > 0) the equivalent T x T dual system
    is solved instead.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError("X must be T x L with T = len(y)")
    if lam < 0.0:
        raise ValidationError("ridge lambda must be nonnegative")
    T, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    if p > T and lam > 0.0:
        dual = np.linalg.solve(Xc @ Xc.T / T + lam * np.eye(T), yc / T)
        beta = Xc.T @ dual
    else:
        A = Xc.T @ Xc / T + lam * np.eye(p)
        if lam == 0.0 and np.linalg.matrix_rank(A) < p:
            raise ValidationError("singular ridge system with lambda = 0")
        beta = np.linalg.solve(A, Xc.T @ yc / T)
    return RidgeModel(beta0=y_mean - float(x_mean @ beta), beta=beta, lam=lam)


def ridge_predict(model: RidgeModel, X: Matrix) -> Vector:  # noqa: D103
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != len(model.beta):
        raise ValidationError(f"expected {len(model.beta)} columns, got {X.shape[-1]}")
    return model.beta0 + X @ model.beta


# Principal-component regression


@dataclass(frozen=True, eq=False)
class PcrModel:
    pca: pca.PcaModel
    alpha0: float
    alpha: Vector


def pcr_fit(X: Matrix, y: Vector, k: int, jitter: float = 1e-10) -> PcrModel:
    """PCA on all of X, then least squares on the leading k factors."""
    basis = pca.fit_pca(X, k)
    alpha0, alpha = least_squares(pca.project(basis, X), np.asarray(y, dtype=np.float64), jitter)
    return PcrModel(pca=basis, alpha0=alpha0, alpha=alpha)


def pcr_predict(model: PcrModel, X: Matrix) -> Vector:  # noqa: D103
    return model.alpha0 + pca.project(model.pca, X) @ model.alpha


# ARIMA


@dataclass(frozen=True, eq=False)
class ArimaLiteModel:
    """ARIMA(p, d, q) with q <= 1.

    `history` holds the last p values of the d-times differenced series,
    `residual` the last in-sample innovation and `tails` the last value of the
    series at each differencing level 0..d-1, which is what undifferencing needs.
    """

    p: int
    d: int
    q: int
    phi: Vector
    theta: Vector
    intercept: float
    history: Vector
    residual: float = 0.0
    tails: Tuple[float, ...] = ()
    aic: float = math.nan


def difference(y: Vector, d: int) -> Tuple[Vector, Tuple[float, ...]]:
    """Difference `d` times; also return the last value at every level below d."""
    tails = []
    w = np.asarray(y, dtype=np.float64)
    for _ in range(d):
        tails.append(float(w[-1]))
        w = np.diff(w)
    return w, tuple(tails)


def undifference(forecast: Vector, tails: Tuple[float, ...]) -> Vector:
    """Integrate differenced forecasts back to the level of the original series."""
    out = np.asarray(forecast, dtype=np.float64)
    for tail in reversed(tails):
        out = tail + np.cumsum(out)
    return out


def _lags(w: Vector, p: int, start: int) -> Matrix:
    if not p:
        return np.zeros((len(w) - start, 0))
    return np.column_stack([w[start - i : len(w) - i] for i in range(1, p + 1)])


def _long_ar_residuals(w: Vector, m: int) -> Vector:
    """Innovations from an AR(m) fit; entries before m are NaN."""
    resid = np.full(len(w), np.nan)
    A = np.column_stack([np.ones(len(w) - m), _lags(w, m, m)])
    coef, *_ = np.linalg.lstsq(A, w[m:], rcond=None)
    resid[m:] = w[m:] - A @ coef
    return resid


@dataclass(frozen=True)
class _Candidate:
    p: int
    d: int
    q: int
    coef: Vector
    rss: float
    n: int
    last_resid: float


def _fit_order(
    w: Vector, p: int, d: int, q: int, start: int, long_resid: Optional[Vector]
) -> Optional[_Candidate]:
    """Regress w[start:] on an intercept, p lags and (q = 1) the lagged innovation."""
    n = len(w) - start
    if n <= p + q + 1:
        return None
    columns = [np.ones(n), _lags(w, p, start)]
    if q:
        assert long_resid is not None
        columns.append(long_resid[start - 1 : len(w) - 1])
    A = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(A, w[start:], rcond=None)
    resid = w[start:] - A @ coef
    return _Candidate(
        p=p, d=d, q=q, coef=coef, rss=float(resid @ resid), n=n, last_resid=float(resid[-1])
    )


def arima_fit(
    y: Vector,
    max_p: int = 3,
    max_d: int = 2,
    max_q: int = 1,
    order: Optional[Tuple[int, int, int]] = None,
) -> ArimaLiteModel:
    """Grid search over (p, d, q) by AIC = n ln(RSS/n) + 2(p + q + 1).

    AR terms are fit by conditional least squares; an MA(1) term uses the
    lagged innovations of a long autoregression as an extra regressor. All
    orders are scored on the same target months so their AICs compare. A fixed
    `order` skips the search.

    Raises
    ------
        ValidationError: if fewer than 10 values remain after differencing.

    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or not np.isfinite(y).all():
        raise ValidationError("ARIMA needs a finite 1-D series")
    if order is not None:
        grid: List[Tuple[int, int, int]] = [tuple(order)]  # type: ignore
        max_p, max_d, max_q = order
    else:
        grid = list(itertools.product(range(max_d + 1), range(max_p + 1), range(max_q + 1)))
        grid = [(p, d, q) for d, p, q in grid]
    if not (0 <= max_p <= 3 and 0 <= max_d <= 2 and 0 <= max_q <= 1):
        raise ValidationError("orders must satisfy p <= 3, d <= 2, q <= 1")
    if len(y) - max_d < 10:
        raise ValidationError(f"series too short: {len(y)} values, need {10 + max_d}")

    m = max(max_p + max_q, 4)
    first_target = max_d + max(max_p, m + 1 if max_q else 0)
    floor_unit = max((1e-10 * float(np.abs(y).max())) ** 2, float(np.finfo(np.float64).tiny))

    best: Optional[_Candidate] = None
    best_aic = math.inf
    for p, d, q in grid:
        w, _ = difference(y, d)
        long_resid = _long_ar_residuals(w, m) if q else None
        candidate = _fit_order(w, p, d, q, first_target - d, long_resid)
        if candidate is None:
            continue
        k = p + q + 1
        rss = max(candidate.rss, candidate.n * floor_unit)
        aic = candidate.n * math.log(rss / candidate.n) + 2.0 * k
        logger.debug("ARIMA(%d,%d,%d): AIC %.6g", p, d, q, aic)
        if aic < best_aic:
            best, best_aic = candidate, aic
    if best is None:
        raise ValidationError("series too short for every ARIMA order in the grid")

    w, tails = difference(y, best.d)
    return ArimaLiteModel(
        p=best.p,
        d=best.d,
        q=best.q,
        phi=best.coef[1 : best.p + 1].copy(),
        theta=best.coef[best.p + 1 :].copy(),
        intercept=float(best.coef[0]),
        history=w[len(w) - best.p :].copy() if best.p else np.zeros(0),
        residual=best.last_resid if best.q else 0.0,
        tails=tails,
        aic=best_aic,
    )


def arima_forecast(model: ArimaLiteModel, h: int) -> Vector:
    """Iterated forecasts for horizons 1..h on the original scale.

    Innovations after the last observed one are zero.
    """
    if h < 1:
        raise ValidationError("horizon must be at least 1")
    recent = list(model.history)
    innovation = model.residual
    out = np.zeros(h)
    for step in range(h):
        value = model.intercept
        for i, phi in enumerate(model.phi, start=1):
            value += phi * recent[-i]
        for theta in model.theta:
            value += theta * innovation
        innovation = 0.0
        out[step] = value
        recent.append(value)
    return undifference(out, model.tails)
