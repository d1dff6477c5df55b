"""Spatial preprocessing of NDVI locations.

Smoothing over grid neighbourhoods, block-centroid sampling, proximity and
variance filters, and the systematic down-sampling that produces the working
location set of a market.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import operators
from .data_ingest import LocationSeries, Mask, Vector
from .errors import ValidationError
from .fast_ops import box_mean, haversine_many

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"lat {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"lon {self.lon} out of range")


@dataclass(frozen=True)
class LocationFilterConfig:
    """Parameters of the per-market working-set pipeline.

    `proximity_km` is the radius D around the market (150 to 300 km is the
    useful range), `variance_percentile` the cut of the variance filter and
    `target_count` the size after systematic sampling. `radius_cells` and the
    block settings drive `prepare_locations`.
    """

    proximity_km: float = 300.0
    variance_percentile: float = 75.0
    target_count: int = 7000
    block_size_deg: float = 0.1
    radius_cells: int = 0
    centroid_sampling: bool = False

    def __post_init__(self) -> None:
        if not self.proximity_km > 0.0:
            raise ValidationError("proximity_km must be positive")
        if not 0.0 < self.variance_percentile <= 100.0:
            raise ValidationError("variance_percentile must lie in (0, 100]")
        if self.target_count < 1:
            raise ValidationError("target_count must be at least 1")
        if not self.block_size_deg > 0.0:
            raise ValidationError("block_size_deg must be positive")
        if self.radius_cells < 0:
            raise ValidationError("radius_cells must be nonnegative")


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km (Earth radius 6371.0 km)."""
    return operators.haversine(a.lat, a.lon, b.lat, b.lon)


def distances_km(locations: Sequence[LocationSeries], point: GeoPoint) -> Vector:
    """Distance from every location to `point`."""
    lats = np.array([loc.lat for loc in locations], dtype=np.float64)
    lons = np.array([loc.lon for loc in locations], dtype=np.float64)
    out = np.zeros(len(locations))
    if len(locations):
        haversine_many(lats, lons, point.lat, point.lon, out)
    return out


def _grid_step(coords: Vector) -> float:
    gaps = np.diff(np.unique(coords))
    gaps = gaps[gaps > 1e-12]
    return float(gaps.min()) if len(gaps) else 0.0


def snap_to_grid(
    locations: Sequence[LocationSeries], cell_deg: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Integer (row, col) grid cells of every location.

    Without `cell_deg` the spacing is the smallest positive gap between distinct
    latitudes or longitudes.

    Raises
    ------
        ValidationError: if two locations fall into the same cell.

    """
    lats = np.array([loc.lat for loc in locations], dtype=np.float64)
    lons = np.array([loc.lon for loc in locations], dtype=np.float64)
    if cell_deg is None:
        steps = [s for s in (_grid_step(lats), _grid_step(lons)) if s > 0.0]
        cell_deg = min(steps) if steps else 1.0
    if not cell_deg > 0.0:
        raise ValidationError("cell_deg must be positive")
    rows = np.rint((lats - lats.min()) / cell_deg).astype(np.int64)
    cols = np.rint((lons - lons.min()) / cell_deg).astype(np.int64)
    seen: Dict[Tuple[int, int], str] = {}
    for loc, r, c in zip(locations, rows, cols):
        key = (int(r), int(c))
        if key in seen:
            raise ValidationError(
                f"locations {seen[key]} and {loc.location_id} snap to the same grid cell"
            )
        seen[key] = loc.location_id
    return rows, cols, cell_deg


def smooth_ndvi(
    locations: Sequence[LocationSeries],
    radius_cells: int,
    cell_deg: Optional[float] = None,
) -> List[LocationSeries]:
    """Average every location over its (2r+1) x (2r+1) grid neighbourhood.

    Only neighbours that carry a value in a given month contribute to that
    month's mean. Each location keeps its own months.
    """
    if radius_cells < 0:
        raise ValidationError("radius_cells must be nonnegative")
    if radius_cells == 0 or not locations:
        return list(locations)

    rows, cols, _ = snap_to_grid(locations, cell_deg)
    months = sorted({m for loc in locations for m in loc.months})
    position = {m: i for i, m in enumerate(months)}
    values = np.zeros((int(rows.max()) + 1, int(cols.max()) + 1, len(months)))
    present = np.zeros(values.shape, dtype=np.bool_)
    occupied = np.zeros(values.shape[:2], dtype=np.bool_)
    for loc, r, c in zip(locations, rows, cols):
        idx = [position[m] for m in loc.months]
        values[r, c, idx] = loc.ndvi
        present[r, c, idx] = ~np.isnan(loc.ndvi)
        occupied[r, c] = True
    values[~present] = 0.0

    out = np.full(values.shape, np.nan)
    box_mean(values, present, occupied, radius_cells, out)

    smoothed = []
    for loc, r, c in zip(locations, rows, cols):
        idx = [position[m] for m in loc.months]
        series = out[r, c, idx]
        # Absent months of the location itself stay absent.
        series[np.isnan(loc.ndvi)] = np.nan
        smoothed.append(loc.with_values(np.clip(series, -1.0, 1.0)))
    logger.debug("smoothed %d locations with radius %d", len(smoothed), radius_cells)
    return smoothed


def block_centroids(
    locations: Sequence[LocationSeries], block_size_deg: float
) -> List[LocationSeries]:
    """One representative per non-empty block: the member nearest the block centre.

    Ties are broken by location id; the result is sorted by location id.
    """
    if not block_size_deg > 0.0:
        raise ValidationError("block_size_deg must be positive")
    blocks: Dict[Tuple[int, int], List[LocationSeries]] = {}
    for loc in locations:
        key = (math.floor(loc.lat / block_size_deg), math.floor(loc.lon / block_size_deg))
        blocks.setdefault(key, []).append(loc)

    chosen = []
    for (bi, bj), members in blocks.items():
        center_lat = (bi + 0.5) * block_size_deg
        center_lon = (bj + 0.5) * block_size_deg
        chosen.append(
            min(
                members,
                key=lambda m: (
                    operators.haversine(m.lat, m.lon, center_lat, center_lon),
                    m.location_id,
                ),
            )
        )
    chosen.sort(key=lambda loc: loc.location_id)
    logger.debug("block centroids: %d of %d locations", len(chosen), len(locations))
    return chosen


def filter_by_proximity(
    locations: Sequence[LocationSeries], market: GeoPoint, D_km: float
) -> List[LocationSeries]:
    """Locations strictly closer than `D_km` to the market, in input order."""
    if not D_km > 0.0:
        raise ValidationError("D_km must be positive")
    keep = distances_km(locations, market) < D_km
    kept = [loc for loc, k in zip(locations, keep) if k]
    if not kept:
        raise ValidationError(f"no locations within D = {D_km} km of ({market.lat}, {market.lon})")
    return kept


def variance_threshold_mask(variances: Vector, percentile: float) -> Mask:
    """Keep entries whose variance does not exceed the given percentile (linear)."""
    if not 0.0 < percentile <= 100.0:
        raise ValidationError("percentile must lie in (0, 100]")
    variances = np.asarray(variances, dtype=np.float64)
    if len(variances) == 0:
        return np.zeros(0, dtype=bool)
    threshold = np.percentile(variances, percentile, method="linear")
    return variances <= threshold


def filter_high_variance(
    locations: Sequence[LocationSeries], percentile: float
) -> List[LocationSeries]:
    """Drop locations whose temporal NDVI variance exceeds the `percentile` cut.

    Variance is the population variance of each series' observed months.
    """
    for loc in locations:
        if int(np.count_nonzero(~np.isnan(loc.ndvi))) < 2:
            raise ValidationError(f"location {loc.location_id}: variance needs 2 or more months")
    variances = np.array([np.nanvar(loc.ndvi) for loc in locations], dtype=np.float64)
    keep = variance_threshold_mask(variances, percentile)
    return [loc for loc, k in zip(locations, keep) if k]


def systematic_sample(
    locations: Sequence[LocationSeries], target_count: int
) -> List[LocationSeries]:
    """Every k-th location in (lat, lon) order, k = n // target_count.

    Location id breaks ties in the sort key so the output never depends on input order.
    """
    if target_count < 1:
        raise ValidationError("target_count must be at least 1")
    ordered = sorted(locations, key=lambda loc: (loc.lat, loc.lon, loc.location_id))
    if len(ordered) <= target_count:
        return ordered
    step = len(ordered) // target_count
    return ordered[::step][:target_count]


def prepare_locations(
    locations: Sequence[LocationSeries],
    config: LocationFilterConfig = LocationFilterConfig(),
    cell_deg: Optional[float] = None,
) -> List[LocationSeries]:
    """Smooth the full location set, then optionally reduce it to block centroids."""
    prepared = smooth_ndvi(locations, config.radius_cells, cell_deg)
    if config.centroid_sampling:
        prepared = block_centroids(prepared, config.block_size_deg)
    return prepared


def select_working_set(
    locations: Sequence[LocationSeries],
    market: GeoPoint,
    config: LocationFilterConfig = LocationFilterConfig(),
) -> List[LocationSeries]:
    """Proximity filter, then variance filter, then systematic sampling."""
    near = filter_by_proximity(locations, market, config.proximity_km)
    calm = filter_high_variance(near, config.variance_percentile)
    working = systematic_sample(calm, config.target_count)
    logger.info(
        "working set at (%.4f, %.4f): %d near, %d after variance filter, %d sampled",
        market.lat,
        market.lon,
        len(near),
        len(calm),
        len(working),
    )
    return working
