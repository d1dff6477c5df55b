"""Deterministic synthetic NDVI, arrival and price data with planted structure.

Random numbers come from ``numpy.random.Generator(numpy.random.PCG64(seed))``,
whose bit stream is fixed for a given seed across platforms. Everything is
drawn in one fixed order, so a SynthConfig determines the output exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import price_model
from .data_ingest import (
    Dataset,
    LocationSeries,
    MarketSeries,
    PathLike,
    Vector,
    build_dataset,
    month_range,
    shift_month,
    write_dataset,
)
from .errors import ValidationError

logger = logging.getLogger(__name__)

PriceCoefs = Tuple[float, float, float, float]

DEFAULT_PRICE_COEFS: Tuple[PriceCoefs, ...] = (
    (0.002, -0.05, 0.03, 0.01),
    (0.003, -0.04, 0.025, 0.01),
    (0.004, -0.03, 0.02, 0.008),
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Locations sit on a `grid_rows` x `grid_cols` lattice with spacing
    `cell_deg` from (`lat0`, `lon0`). Arrivals exist for every month but the
    first. `price_coefs` holds (a0, a1, a2, a3) for horizons 1, 2 and 3; the
    state price follows the law of `price_horizon`.
    """

    seed: int = 0
    grid_rows: int = 20
    grid_cols: int = 25
    lat0: float = 15.0
    lon0: float = 75.0
    cell_deg: float = 0.05
    start_month: str = "2015-01"
    months: int = 48
    n_markets: int = 4
    n_true_locations: int = 5
    coef_scale: float = 1.0
    noise_sigma: float = 0.05
    ndvi_noise: float = 0.1
    base_log_arrival: float = 8.0
    price_coefs: Tuple[PriceCoefs, ...] = DEFAULT_PRICE_COEFS
    price_horizon: int = 1
    price_noise: float = 0.0
    w: float = 0.9
    d: int = 12
    base_price: float = 5000.0

    def __post_init__(self) -> None:
        for name in ("grid_rows", "grid_cols", "months", "n_markets", "n_true_locations"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.n_true_locations > self.n_locations:
            raise ValidationError("n_true_locations exceeds the number of locations")
        if self.months < 2:
            raise ValidationError("months must be at least 2")
        if self.price_horizon not in (1, 2, 3):
            raise ValidationError("price_horizon must be 1, 2 or 3")
        if min(self.noise_sigma, self.ndvi_noise, self.price_noise) < 0.0:
            raise ValidationError("noise levels must be nonnegative")
        if len(self.price_coefs) != 3 or any(len(c) != 4 for c in self.price_coefs):
            raise ValidationError("price_coefs needs four values for each of the horizons 1, 2 and 3")

    @property
    def n_locations(self) -> int:  # noqa: D102
        return self.grid_rows * self.grid_cols

    def coefs_for(self, horizon: int) -> PriceCoefs:
        """(a0, a1, a2, a3) of `horizon`."""
        return tuple(self.price_coefs[horizon - 1])  # type: ignore


@dataclass(frozen=True)
class GroundTruth:
    supports: Dict[str, List[str]]
    coefficients: Dict[str, Dict[str, float]]
    intercepts: Dict[str, float]
    price_coefs: Dict[int, PriceCoefs]
    price_horizon: int
    w: float
    d: int
    price_factors: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:  # noqa: D102
        return json.dumps(asdict(self), indent=2) + "\n"


def _location_ids(config: SynthConfig) -> List[str]:
    width = len(str(config.n_locations - 1))
    return [f"L{i:0{width}d}" for i in range(config.n_locations)]


def state_price_path(
    state_arrivals: Vector, config: SynthConfig, noise: Vector
) -> Vector:
    """Log-price path whose changes follow the configured horizon law.

    dP_s = a0 + a1 D_{s-k+1} + a2 D_{s-k} + a3 D_{s-k-1} (+ noise) once all
    three differences exist, and a0 (+ noise) before.
    """
    k = config.price_horizon
    a0, a1, a2, a3 = config.coefs_for(k)
    a, _ = price_model.log_arrivals(state_arrivals)
    D = price_model.arrival_differences(price_model.weighted_arrivals(a, config.w), config.d)
    first = price_model.WINDOW - 1 + config.d + 1 + k
    P = np.empty(len(state_arrivals))
    P[0] = math.log(config.base_price)
    for s in range(1, len(P)):
        delta = a0 + noise[s]
        if s >= first:
            delta += a1 * D[s - k + 1] + a2 * D[s - k] + a3 * D[s - k - 1]
        P[s] = P[s - 1] + delta
    return P


def generate(config: SynthConfig) -> Tuple[Dataset, GroundTruth]:
    """Synthetic Dataset plus the structure planted in it."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    M, L = config.months, config.n_locations
    months = month_range(config.start_month, shift_month(config.start_month, M - 1))
    ids = _location_ids(config)

    # NDVI: seasonal sinusoid + per-location offset + noise.
    offsets = rng.uniform(-0.2, 0.2, L)
    amplitudes = rng.uniform(0.1, 0.3, L)
    phases = rng.uniform(0.0, 2.0 * math.pi, L)
    t = np.arange(M, dtype=np.float64)[:, None]
    ndvi = 0.3 + offsets + amplitudes * np.sin(2.0 * math.pi * t / 12.0 + phases)
    ndvi = np.clip(ndvi + config.ndvi_noise * rng.standard_normal((M, L)), -1.0, 1.0)
    rows, cols = np.divmod(np.arange(L), config.grid_cols)
    locations = [
        LocationSeries(
            location_id=ids[j],
            lat=round(config.lat0 + rows[j] * config.cell_deg, 10),
            lon=round(config.lon0 + cols[j] * config.cell_deg, 10),
            months=months,
            ndvi=ndvi[:, j].copy(),
        )
        for j in range(L)
    ]

    # Arrivals: log a_t = b0 + sum_l b_l ndvi_{l, t-1} + noise, for t >= 1.
    center_lat = config.lat0 + (config.grid_rows - 1) * config.cell_deg / 2.0
    center_lon = config.lon0 + (config.grid_cols - 1) * config.cell_deg / 2.0
    market_ids = [f"M{i + 1:02d}" for i in range(config.n_markets)]
    supports: Dict[str, List[str]] = {}
    coefficients: Dict[str, Dict[str, float]] = {}
    intercepts: Dict[str, float] = {}
    arrivals: Dict[str, Vector] = {}
    positions: Dict[str, Tuple[float, float]] = {}
    for market_id in market_ids:
        lat = center_lat + rng.uniform(-0.2, 0.2)
        lon = center_lon + rng.uniform(-0.2, 0.2)
        support = np.sort(rng.choice(L, config.n_true_locations, replace=False))
        beta = config.coef_scale * rng.uniform(0.5, 1.5, len(support)) * rng.choice([-1.0, 1.0], len(support))
        b0 = config.base_log_arrival + rng.uniform(-0.5, 0.5)
        noise = config.noise_sigma * rng.standard_normal(M - 1)
        log_a = b0 + ndvi[:-1, support] @ beta + noise
        arrivals[market_id] = np.exp(log_a)
        positions[market_id] = (round(lat, 6), round(lon, 6))
        supports[market_id] = [ids[j] for j in support]
        coefficients[market_id] = {ids[j]: float(b) for j, b in zip(support, beta)}
        intercepts[market_id] = float(b0)

    # Prices: state log-price path scaled per market by a constant factor.
    state = np.sum([arrivals[m] for m in market_ids], axis=0)
    price_noise = config.price_noise * rng.standard_normal(M - 1)
    P = state_price_path(state, config, price_noise)
    factors = {m: float(rng.uniform(0.9, 1.1)) for m in market_ids}
    markets = [
        MarketSeries(
            market_id=m,
            name=f"Market {m[1:]}",
            lat=positions[m][0],
            lon=positions[m][1],
            months=months[1:],
            arrivals=arrivals[m],
            prices=factors[m] * np.exp(P),
        )
        for m in market_ids
    ]
    truth = GroundTruth(
        supports=supports,
        coefficients=coefficients,
        intercepts=intercepts,
        price_coefs={k: config.coefs_for(k) for k in (1, 2, 3)},
        price_horizon=config.price_horizon,
        w=config.w,
        d=config.d,
        price_factors=factors,
    )
    logger.debug("synthesized %d locations, %d markets, %d months", L, len(markets), M)
    return build_dataset(locations, markets), truth


def write_synth(config: SynthConfig, directory: PathLike) -> Dict[str, Path]:
    """Generate and write ndvi.csv, arrivals.csv, prices.csv and groundtruth.json."""
    dataset, truth = generate(config)
    paths = write_dataset(dataset, directory)
    paths["groundtruth"] = Path(directory) / "groundtruth.json"
    paths["groundtruth"].write_text(truth.to_json(), encoding="utf-8")
    return paths
