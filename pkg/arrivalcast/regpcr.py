"""The regularized principal-component regression cascade.

Stage 1 fits an elastic net of log arrivals on last month's NDVI at every
location and keeps the locations with a nonzero coefficient. Stage 2 takes the
principal components of the survivors, stage 3 keeps the components a lasso
retains, and a final least-squares fit maps the retained factors to log
arrivals.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import elastic_net, pca
from .data_ingest import (
    LocationSeries,
    MarketSeries,
    Mask,
    Matrix,
    Vector,
    month_range,
    ndvi_matrix,
    shift_month,
)
from .elastic_net import ElasticNetConfig, ElasticNetModel
from .errors import ValidationError

logger = logging.getLogger(__name__)

FORMAT = "arrivalcast.regpcr/1"


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Lag-aligned predictors and log-arrival response of one market.

    Row t of `X` holds NDVI from the month before `month_labels[t]`; `y[t]` is
    the log arrival of `month_labels[t]` and `arrivals[t]` the arrival itself.
    `shifted` marks a log(1 + a) response, used when some arrival is zero.
    """

    X: Matrix
    y: Vector
    arrivals: Vector
    month_labels: Tuple[str, ...]
    location_ids: Tuple[str, ...]
    shifted: bool = False

    @property
    def T(self) -> int:  # noqa: D102
        return len(self.y)

    @property
    def L(self) -> int:  # noqa: D102
        return len(self.location_ids)

    def rows(self, stop: int, start: int = 0) -> DesignMatrix:
        """The sub-design of rows [start, stop)."""
        return DesignMatrix(
            X=self.X[start:stop],
            y=self.y[start:stop],
            arrivals=self.arrivals[start:stop],
            month_labels=self.month_labels[start:stop],
            location_ids=self.location_ids,
            shifted=self.shifted,
        )


def log_response(arrivals: Vector, shifted: bool) -> Vector:
    """log(a), or log(1 + a) when `shifted`."""
    return np.log1p(arrivals) if shifted else np.log(arrivals)


def arrival_response(y: Vector, shifted: bool) -> Vector:
    """Inverse of `log_response` (clipped at zero when shifted)."""
    return np.maximum(np.expm1(y), 0.0) if shifted else np.exp(y)


def _longest_run(usable: Sequence[bool]) -> Tuple[int, int]:
    best = (0, 0)
    start = None
    for i, ok in enumerate(list(usable) + [False]):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start >= best[1] - best[0]:
                best = (start, i)
            start = None
    return best


def build_design(
    market: MarketSeries,
    locations: Sequence[LocationSeries],
    window: Optional[Tuple[str, str]] = None,
) -> DesignMatrix:
    """Assemble the lag-1 design of `market` over the working `locations`.

    `window` is the (first, last) month of the response. Without it the
    longest run of months with an arrival and a complete NDVI lag row is used
    (the latest one on ties).

    Raises
    ------
        ValidationError: when a month in an explicit window lacks an arrival, or
            a location lacks NDVI for the lag month.

    """
    if not locations:
        raise ValidationError("no locations to build a design from")
    ids = tuple(loc.location_id for loc in locations)
    if window is None:
        lag_months = [shift_month(m, -1) for m in market.months]
        lagged = ndvi_matrix(locations, lag_months)
        usable = ~np.isnan(market.arrivals) & ~np.isnan(lagged).any(axis=1)
        start, stop = _longest_run(usable)
        if stop - start < 1:
            raise ValidationError(f"market {market.market_id}: no month with arrivals and lagged NDVI")
        months = tuple(market.months[start:stop])
    else:
        first, last = window
        if first > last:
            raise ValidationError(f"empty window {first}..{last}")
        months = tuple(m for m in market.months if first <= m <= last)
        if len(months) != len(month_range(first, last)):
            raise ValidationError(f"market {market.market_id}: no arrivals for part of {first}..{last}")

    arrivals = np.array([market.arrival_at(m) for m in months])
    for m, a in zip(months, arrivals):
        if np.isnan(a):
            raise ValidationError(f"market {market.market_id}: missing arrival for {m}")
    X = ndvi_matrix(locations, [shift_month(m, -1) for m in months])
    if np.isnan(X).any():
        t, j = np.argwhere(np.isnan(X))[0]
        raise ValidationError(
            f"location {ids[j]}: missing NDVI for {shift_month(months[t], -1)}"
        )
    shifted = bool((arrivals == 0.0).any())
    if shifted:
        logger.info("market %s: zero arrivals present, using log(1 + a)", market.market_id)
    return DesignMatrix(
        X=X,
        y=log_response(arrivals, shifted),
        arrivals=arrivals,
        month_labels=months,
        location_ids=ids,
        shifted=shifted,
    )


def select_variables(enet: ElasticNetModel, threshold: float = 0.0) -> Mask:
    """Locations whose stage-1 coefficient satisfies |beta| > threshold."""
    if threshold < 0.0:
        raise ValidationError("threshold must be nonnegative")
    mask = np.abs(enet.beta) > threshold
    if not mask.any():
        raise ValidationError("selection eliminated all variables; decrease λ or γ")
    return mask


def fit_factor_lasso(
    F: Matrix,
    y: Vector,
    lam: float,
    tol: float = 1e-7,
    max_sweeps: int = 10000,
    beta_init: Optional[Vector] = None,
) -> ElasticNetModel:
    """Lasso of y on factors for the objective ||y - a0 - F a||^2 + lam ||a||_1.

    The intercept is unpenalized and the factors are not rescaled.
    """
    T = len(y)
    config = ElasticNetConfig(
        lam=lam / (2.0 * T),
        gamma=1.0,
        tol=tol,
        max_sweeps=max_sweeps,
        penalize_intercept=False,
        standardize=False,
    )
    return elastic_net.fit(F, y, config, beta_init=beta_init)


def select_factors(
    F: Matrix,
    y: Vector,
    lam: Optional[float] = None,
    target_factors: int = 10,
    n_lambdas: int = 50,
    tol: float = 1e-7,
) -> Tuple[Mask, float]:
    """Factors kept by the lasso.

    With an explicit `lam` the nonzero coefficients at that penalty are returned.
    Otherwise a descending grid is scanned and the penalty with the largest
    survivor count not above `target_factors` wins, the larger penalty on ties.

    Returns
    -------
        The factor mask and the penalty that produced it.

    """
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam is not None:
        mask = fit_factor_lasso(F, y, lam, tol).beta != 0.0
        if not mask.any():
            raise ValidationError(f"no factor survives lasso penalty {lam}")
        return mask, float(lam)

    centered = F - F.mean(axis=0)
    lam_max = 2.0 * float(np.abs(centered.T @ (y - y.mean())).max(initial=0.0))
    if lam_max <= 0.0:
        raise ValidationError("no factor survives any lasso penalty")
    best_mask: Optional[Mask] = None
    best_lam = lam_max
    warm = None
    for candidate in np.geomspace(lam_max, 1e-6 * lam_max, n_lambdas):
        model = fit_factor_lasso(F, y, float(candidate), tol, beta_init=warm)
        warm = model.beta
        mask = model.beta != 0.0
        count = int(mask.sum())
        if count > target_factors:
            break
        if count > 0 and (best_mask is None or count > int(best_mask.sum())):
            best_mask, best_lam = mask, float(candidate)
    if best_mask is None:
        raise ValidationError("no factor survives any lasso penalty")
    return best_mask, best_lam


def jittered_solve(A: Matrix, y: Vector, jitter: float = 1e-10) -> Vector:
    """Normal equations with each diagonal entry of A'A raised by `jitter` times itself.

    The ridge follows the size of every column, so collinear columns in any units
    become solvable; `lstsq` takes over if the system is still singular.
    """
    G = A.T @ A
    diagonal = np.diag(G)
    ridge = jitter * np.where(diagonal > 0.0, diagonal, 1.0)
    try:
        return np.linalg.solve(G + np.diag(ridge), A.T @ y)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef


def least_squares(F: Matrix, y: Vector, jitter: float = 1e-10) -> Tuple[float, Vector]:
    """Intercept and slopes from the jittered normal equations."""
    coef = jittered_solve(np.column_stack([np.ones(len(y)), F]), y, jitter)
    return float(coef[0]), coef[1:]


@dataclass(frozen=True)
class RegPcrConfig:
    """Settings of the cascade.

    `lam=None` picks the stage-1 penalty by rolling-origin cross-validation over
    `n_lambdas` grid points; `factor_lam=None` scans for `target_factors`.
    """

    gamma: float = 0.05
    lam: Optional[float] = None
    cv_folds: int = 3
    n_lambdas: int = 50
    threshold: float = 0.0
    target_factors: int = 10
    factor_lam: Optional[float] = None
    pca_scale: bool = False
    tol: float = 1e-7
    max_sweeps: int = 10000
    jitter: float = 1e-10
    min_rows: int = 8

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if self.target_factors < 1:
            raise ValidationError("target_factors must be at least 1")
        if self.min_rows < 3:
            raise ValidationError("min_rows must be at least 3")


@dataclass(frozen=True, eq=False)
class RegPcrModel:
    location_ids: Tuple[str, ...]
    selection_mask: Mask
    pca: Optional[pca.PcaModel]
    pc_mask: Mask
    alpha0: float
    alpha: Vector
    shifted: bool
    config: RegPcrConfig
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    enet: Optional[ElasticNetModel] = field(default=None, repr=False)

    @property
    def p(self) -> int:  # noqa: D102
        return int(self.selection_mask.sum())

    @property
    def selected_locations(self) -> List[str]:  # noqa: D102
        return [i for i, keep in zip(self.location_ids, self.selection_mask) if keep]


def stage1_config(config: RegPcrConfig) -> ElasticNetConfig:
    """Elastic-net settings of the selection stage (unpenalized intercept, standardized)."""
    return ElasticNetConfig(
        gamma=config.gamma,
        tol=config.tol,
        max_sweeps=config.max_sweeps,
        penalize_intercept=False,
        standardize=True,
    )


def fit(design: DesignMatrix, config: RegPcrConfig = RegPcrConfig()) -> RegPcrModel:
    """Run the full cascade on a design.

    A constant response yields a degenerate model that always predicts it.
    """
    T, L = design.X.shape
    if T < config.min_rows:
        raise ValidationError(f"RegPCR needs at least {config.min_rows} months, got {T}")
    X, y = design.X, design.y

    if np.ptp(y) == 0.0:
        logger.info("constant response; fitting the intercept only")
        return RegPcrModel(
            location_ids=design.location_ids,
            selection_mask=np.zeros(L, dtype=bool),
            pca=None,
            pc_mask=np.zeros(0, dtype=bool),
            alpha0=float(y[0]),
            alpha=np.zeros(0),
            shifted=design.shifted,
            config=config,
            diagnostics={"degenerate": True, "in_sample_mae": 0.0},
        )

    stage1 = stage1_config(config)
    lam = config.lam
    if lam is None:
        grid = elastic_net.lambda_grid(X, y, config.gamma, n_lambdas=config.n_lambdas)
        lam, _ = elastic_net.select_lambda(X, y, stage1, grid, config.cv_folds)
    enet = elastic_net.fit(X, y, replace(stage1, lam=lam))
    selection = select_variables(enet, config.threshold)

    basis = pca.fit_pca(X[:, selection], scale=config.pca_scale)
    F = pca.project(basis, X[:, selection])
    pc_mask, factor_lam = select_factors(
        F, y, config.factor_lam, config.target_factors, config.n_lambdas, config.tol
    )
    alpha0, alpha = least_squares(F[:, pc_mask], y, config.jitter)
    fitted = alpha0 + F[:, pc_mask] @ alpha
    diagnostics = {
        "degenerate": False,
        "in_sample_mae": float(np.abs(fitted - y).mean()),
        "stage1_lambda": float(lam),
        "stage1_gamma": config.gamma,
        "stage1_converged": enet.converged,
        "factor_lambda": factor_lam,
        "n_selected": int(selection.sum()),
        "n_factors": int(pc_mask.sum()),
    }
    logger.info(
        "RegPCR: %d of %d locations, %d of %d factors",
        diagnostics["n_selected"],
        L,
        diagnostics["n_factors"],
        basis.k,
    )
    return RegPcrModel(
        location_ids=design.location_ids,
        selection_mask=selection,
        pca=basis,
        pc_mask=pc_mask,
        alpha0=alpha0,
        alpha=alpha,
        shifted=design.shifted,
        config=config,
        diagnostics=diagnostics,
        enet=enet,
    )


def predict_log(model: RegPcrModel, x: Vector) -> Vector:
    """Log-scale prediction from last month's NDVI (a row or a matrix of rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(model.location_ids):
        raise ValidationError(f"expected {len(model.location_ids)} locations, got {x.shape[-1]}")
    if model.pca is None:
        return np.full(x.shape[:-1], model.alpha0)
    factors = pca.project(model.pca, x[..., model.selection_mask])
    return model.alpha0 + factors[..., model.pc_mask] @ model.alpha


def predict(model: RegPcrModel, x: Vector) -> Vector:
    """Arrival prediction from last month's NDVI."""
    return arrival_response(predict_log(model, x), model.shifted)


# Persistence


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _nums(values: np.ndarray) -> Any:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        return [_num(v) for v in values]
    return [_nums(row) for row in values]


def _config_dict(config: RegPcrConfig) -> Dict[str, Any]:
    return {
        k: (None if v is None else _num(v) if isinstance(v, float) else v)
        for k, v in asdict(config).items()
    }


def to_json(model: RegPcrModel) -> str:
    """Serialize a model to a JSON document with a fixed key order."""
    basis = None
    if model.pca is not None:
        basis = {
            "mean": _nums(model.pca.mean),
            "components": _nums(model.pca.components),
            "eigenvalues": _nums(model.pca.eigenvalues),
            "scale": None if model.pca.scale is None else _nums(model.pca.scale),
            "total_variance": _num(model.pca.total_variance),
        }
    diagnostics = {
        k: _num(v) if isinstance(v, float) else v for k, v in model.diagnostics.items()
    }
    document = {
        "format": FORMAT,
        "config": _config_dict(model.config),
        "location_ids": list(model.location_ids),
        "selected_locations": model.selected_locations,
        "shifted": model.shifted,
        "pca": basis,
        "selected_factors": [int(i) for i in np.flatnonzero(model.pc_mask)],
        "n_factors": int(len(model.pc_mask)),
        "alpha0": _num(model.alpha0),
        "alpha": _nums(model.alpha),
        "diagnostics": diagnostics,
    }
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def _floats(values: Any) -> np.ndarray:
    return np.array(values, dtype=np.float64).reshape(np.shape(values))


def from_json(text: str) -> RegPcrModel:
    """Inverse of `to_json` (the stage-1 solver state is not stored)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"model file is not JSON: {e}") from e
    if doc.get("format") != FORMAT:
        raise ValidationError(f"unknown model format {doc.get('format')!r}")

    raw = doc["config"]
    config = RegPcrConfig(
        **{
            k: (float(v) if isinstance(v, str) else v)
            for k, v in raw.items()
        }
    )
    ids = tuple(doc["location_ids"])
    selected = set(doc["selected_locations"])
    basis = None
    if doc["pca"] is not None:
        b = doc["pca"]
        basis = pca.PcaModel(
            mean=_floats(b["mean"]),
            components=_floats(b["components"]).reshape(-1, len(selected)),
            eigenvalues=_floats(b["eigenvalues"]),
            scale=None if b["scale"] is None else _floats(b["scale"]),
            total_variance=float(b["total_variance"]),
        )
    pc_mask = np.zeros(doc["n_factors"], dtype=bool)
    pc_mask[doc["selected_factors"]] = True
    diagnostics = {
        k: float(v) if isinstance(v, str) else v for k, v in doc["diagnostics"].items()
    }
    return RegPcrModel(
        location_ids=ids,
        selection_mask=np.array([i in selected for i in ids], dtype=bool),
        pca=basis,
        pc_mask=pc_mask,
        alpha0=float(doc["alpha0"]),
        alpha=_floats(doc["alpha"]),
        shifted=bool(doc["shifted"]),
        config=config,
        diagnostics=diagnostics,
    )
