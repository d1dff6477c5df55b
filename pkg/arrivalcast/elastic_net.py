"""Cyclic coordinate-descent elastic net.

Minimizes

    (1/2T) ||y - b0 - X b||^2 + lam * ((1 - gamma)/2 ||b||^2 + gamma ||b||_1)

one coordinate at a time. Two intercept conventions are available: the
penalized bias update (`penalize_intercept=True`) solves

    -(1/T) 1'(y - b0 - X b) - lam (1 - gamma) b0 + lam gamma sign(b0) = 0

exactly as written, piecewise over the sign of b0. Standardizing centers the
columns but not y, so that update shrinks the mean response. The conventional form
(`penalize_intercept=False`) leaves b0 unpenalized and is what the rest of the
package uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import operators
from .data_ingest import Matrix, Vector
from .errors import NumericalError, ValidationError
from .fast_ops import enet_sweep

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElasticNetConfig:
    lam: float = 0.0
    gamma: float = 0.05
    tol: float = 1e-7
    max_sweeps: int = 10000
    penalize_intercept: bool = True
    standardize: bool = True

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ValidationError("lambda must be a finite nonnegative number")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if not self.tol > 0.0:
            raise ValidationError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be at least 1")


@dataclass(frozen=True, eq=False)
class ElasticNetModel:
    """A fitted elastic net.

    `beta0` and `beta` are on the original data scale. `means` and `scales` are
    the column statistics used for standardization, `dropped` the indices of
    zero-variance columns (their coefficient is 0). `objective_trace` holds the
    objective after every sweep, on the working (standardized) scale, when the
    fit was asked to track it.
    """

    beta0: float
    beta: Vector
    config: ElasticNetConfig
    n_sweeps: int
    converged: bool
    means: Vector
    scales: Vector
    dropped: Tuple[int, ...] = ()
    objective_trace: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_features(self) -> int:  # noqa: D102
        return len(self.beta)


def _check_design(X: Matrix, y: Vector) -> Tuple[Matrix, Vector]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1:
        raise ValidationError("X must be 2-D and y 1-D")
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("non-finite value in X or y")
    return X, y


def objective(
    X: Matrix,
    y: Vector,
    beta0: float,
    beta: Vector,
    lam: float,
    gamma: float,
    penalize_intercept: bool = True,
) -> float:
    """Elastic-net objective; the penalty covers `beta0` only when `penalize_intercept`."""
    X, y = _check_design(X, y)
    beta = np.asarray(beta, dtype=np.float64)
    if X.shape[1] != beta.shape[0]:
        raise ValidationError(f"X has {X.shape[1]} columns but beta has {beta.shape[0]} entries")
    T = X.shape[0]
    resid = y - beta0 - X @ beta
    coefs = np.append(beta, beta0) if penalize_intercept else beta
    penalty = lam * ((1.0 - gamma) / 2.0 * coefs @ coefs + gamma * np.abs(coefs).sum())
    return float(resid @ resid / (2.0 * T) + penalty)


def _column_stats(X: Matrix, config: ElasticNetConfig) -> Tuple[Vector, Vector, np.ndarray]:
    means = X.mean(axis=0)
    spread = X.std(axis=0)
    keep = spread > 1e-12 * np.maximum(1.0, np.abs(means))
    shift = means if (config.standardize or not config.penalize_intercept) else np.zeros_like(means)
    scales = np.where(keep, spread, 1.0) if config.standardize else np.ones_like(means)
    return shift, scales, keep


def _bias_update(mean_partial: float, lam: float, gamma: float) -> float:
    """Solve the penalized bias equation given the mean of y - X b."""
    c = 1.0 - lam * (1.0 - gamma)
    if c <= 0.0:
        logger.warning("bias equation has no solution for lambda=%g gamma=%g; using mean", lam, gamma)
        return mean_partial
    return operators.soft_threshold(mean_partial, lam * gamma) / c


def fit(
    X: Matrix,
    y: Vector,
    config: ElasticNetConfig = ElasticNetConfig(),
    beta_init: Optional[Vector] = None,
    track_objective: bool = False,
) -> ElasticNetModel:
    """Fit by cyclic coordinate descent until the largest coefficient change is below `tol`.

    Args:
    ----
        X: T x L design
        y: length-T response
        config: solver settings
        beta_init: optional warm start on the original scale
        track_objective: record the objective after every sweep

    Returns:
    -------
        ElasticNetModel on the original scale; `converged` is False when
        `max_sweeps` ran out.

    """
    X, y = _check_design(X, y)
    T, L = X.shape
    if T < 2:
        raise ValidationError("elastic net needs at least 2 rows")

    shift, scales, keep = _column_stats(X, config)
    Z = np.asfortranarray((X[:, keep] - shift[keep]) / scales[keep])
    col_sq = (Z * Z).mean(axis=0)
    l1 = config.lam * config.gamma
    l2 = config.lam * (1.0 - config.gamma)

    y_mean = float(y.mean())
    target = y if config.penalize_intercept else y - y_mean
    b = np.zeros(Z.shape[1])
    if beta_init is not None:
        beta_init = np.asarray(beta_init, dtype=np.float64)
        if beta_init.shape != (L,):
            raise ValidationError(f"beta_init must have {L} entries")
        b[:] = beta_init[keep] * scales[keep]

    fitted = Z @ b
    b0 = _bias_update(float((target - fitted).mean()), config.lam, config.gamma) if config.penalize_intercept else 0.0
    resid = target - b0 - fitted

    trace = []
    converged = False
    sweeps = 0
    every = np.arange(Z.shape[1])
    active = every
    on_active = False
    for sweeps in range(1, config.max_sweeps + 1):
        delta = enet_sweep(Z, resid, b, col_sq, l1, l2, active if on_active else every)
        if config.penalize_intercept:
            new_b0 = _bias_update(float(resid.mean()) + b0, config.lam, config.gamma)
            resid -= new_b0 - b0
            delta = max(delta, abs(new_b0 - b0))
            b0 = new_b0
        if not np.isfinite(delta):
            raise NumericalError("coordinate descent diverged")
        if track_objective:
            trace.append(
                objective(Z, target, b0, b, config.lam, config.gamma, config.penalize_intercept)
            )
        if delta <= config.tol:
            if not on_active:
                converged = True
                break
            # Active set settled; confirm with a sweep over every column.
            on_active = False
        elif not on_active:
            active = np.flatnonzero(b)
            on_active = 0 < len(active) < len(b)
    if not converged:
        logger.warning("elastic net did not converge in %d sweeps", config.max_sweeps)

    beta = np.zeros(L)
    beta[keep] = b / scales[keep]
    if config.penalize_intercept:
        beta0 = b0 - float(shift[keep] @ beta[keep])
    else:
        beta0 = y_mean - float(shift[keep] @ beta[keep])
    dropped = tuple(int(j) for j in np.flatnonzero(~keep))
    logger.debug(
        "elastic net lam=%g gamma=%g: %d sweeps, %d nonzero of %d",
        config.lam,
        config.gamma,
        sweeps,
        int(np.count_nonzero(beta)),
        L,
    )
    return ElasticNetModel(
        beta0=float(beta0),
        beta=beta,
        config=config,
        n_sweeps=sweeps,
        converged=converged,
        means=X.mean(axis=0),
        scales=scales,
        dropped=dropped,
        objective_trace=tuple(trace),
    )


def predict(model: ElasticNetModel, X: Matrix) -> Vector:
    """b0 + X b on the original scale; a single row may be passed as a vector."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.n_features:
        raise ValidationError(f"expected {model.n_features} columns, got {X.shape[-1]}")
    return model.beta0 + X @ model.beta


def lambda_max(X: Matrix, y: Vector, gamma: float, standardize: bool = True) -> float:
    """Smallest lambda at which the unpenalized-intercept fit is all zero.

    max|x_j'y| / (T max(gamma, 0.001)) over centered (and, with `standardize`,
    scaled) columns against the centered response; 0 when nothing varies.
    """
    X, y = _check_design(X, y)
    spread = X.std(axis=0)
    Z = X - X.mean(axis=0)
    if standardize:
        Z = Z[:, spread > 0.0] / spread[spread > 0.0]
    if Z.shape[1] == 0:
        return 0.0
    return float(np.abs(Z.T @ (y - y.mean())).max()) / (X.shape[0] * max(gamma, 0.001))


def lambda_grid(
    X: Matrix,
    y: Vector,
    gamma: float,
    n_lambdas: int = 50,
    ratio: float = 1e-4,
    standardize: bool = True,
) -> Vector:
    """`n_lambdas` log-spaced lambdas, largest first, ending at `ratio` * lambda_max.

    The grid starts one log step below `lambda_max`, so every grid point keeps
    at least one variable on the data it was built from.
    """
    top = lambda_max(X, y, gamma, standardize)
    if top <= 0.0:
        return np.zeros(1)
    return np.geomspace(top, ratio * top, n_lambdas + 1)[1:]


# Training R^2 at which a cross-validation path stops refitting (glmnet's devmax).
SATURATION_R2 = 0.999


def select_lambda(
    X: Matrix,
    y: Vector,
    config: ElasticNetConfig,
    lambdas: Optional[Sequence[float]] = None,
    cv_folds: int = 3,
) -> Tuple[float, Vector]:
    """Pick lambda by rolling-origin one-step-ahead MAE over the last `cv_folds` rows.

    Each fold trains on the rows before its origin and predicts the origin row.
    The first fold walks the (descending) grid with warm starts; later folds
    start every lambda from the previous fold's solution. Once a fold's
    training R^2 reaches `SATURATION_R2` the smaller lambdas reuse that fit.

    Only lambdas whose fit on the last fold keeps a variable are eligible (and,
    with a free intercept, only those below `lambda_max` of all rows); ties go
    to the larger lambda.

    Returns
    -------
        The chosen lambda and the mean MAE of every grid point (NaN for the
        ineligible ones).

    """
    X, y = _check_design(X, y)
    T = X.shape[0]
    if lambdas is None:
        lambdas = lambda_grid(X, y, config.gamma, standardize=config.standardize)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if not 1 <= cv_folds <= T - 2:
        raise ValidationError(f"cv_folds must lie in [1, {T - 2}] for {T} rows")

    n = len(lambdas)
    errors = np.zeros((n, cv_folds))
    kept = np.zeros(n, dtype=bool)
    previous: List[Optional[Vector]] = [None] * n
    for f in range(cv_folds):
        origin = T - cv_folds + f
        Xf, yf = X[:origin], y[:origin]
        tss = float(((yf - yf.mean()) ** 2).sum())
        warm = None
        saturated: Optional[ElasticNetModel] = None
        for i, lam in enumerate(lambdas):
            model = saturated
            if model is None:
                start = previous[i] if previous[i] is not None else warm
                model = fit(Xf, yf, replace(config, lam=float(lam)), beta_init=start)
                resid = yf - predict(model, Xf)
                if tss > 0.0 and 1.0 - float(resid @ resid) / tss >= SATURATION_R2:
                    saturated = model
            warm = previous[i] = model.beta
            errors[i, f] = abs(float(predict(model, X[origin])) - y[origin])
            if f == cv_folds - 1:
                kept[i] = bool(model.beta.any())

    if not config.penalize_intercept:
        kept &= lambdas < lambda_max(X, y, config.gamma, config.standardize)
    mae = errors.mean(axis=1)
    if not kept.any():
        logger.warning("every lambda empties the model on the last fold; choosing among all")
        kept[:] = True
    mae[~kept] = np.nan
    best = int(np.nanargmin(mae))
    logger.debug("selected lambda %g (cv MAE %g)", lambdas[best], mae[best])
    return float(lambdas[best]), mae
