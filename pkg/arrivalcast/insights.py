"""Location importance accumulated over repeated stage-1 fits, and the ranked
site list used to plan crop-cutting experiments (CCE)."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from . import operators
from .data_ingest import LocationSeries, PathLike, Vector
from .elastic_net import ElasticNetModel
from .errors import ValidationError

logger = logging.getLogger(__name__)

IMPORTANCE_COLUMNS = ("location_id", "lat", "lon", "selection_count", "mean_abs_coef", "importance")
DOMINANCE = ("nonzero", "top_quartile")


@dataclass(frozen=True, eq=False)
class LocationImportance:
    """Per-location aggregation over `total_fits` fits.

    importance = mean_abs_coef * selection_count / total_fits, where the mean
    of |beta| runs over the fits in which the location was dominant.
    """

    location_ids: Tuple[str, ...]
    selection_count: np.ndarray
    mean_abs_coef: Vector
    importance: Vector
    total_fits: int

    def as_dict(self) -> Dict[str, float]:  # noqa: D102
        return {i: float(v) for i, v in zip(self.location_ids, self.importance)}


def _dominant(beta: Vector, dominance: str) -> np.ndarray:
    nonzero = beta != 0.0
    if dominance == "nonzero" or not nonzero.any():
        return nonzero
    cut = np.percentile(np.abs(beta[nonzero]), 75.0)
    return nonzero & (np.abs(beta) >= cut)


def accumulate_importance(
    fits: Sequence[Tuple[Sequence[str], ElasticNetModel]], dominance: str = "nonzero"
) -> LocationImportance:
    """Aggregate stage-1 coefficients (original scale) over a fit history.

    `fits` pairs each model with the location ids of its columns. A location is
    dominant in a fit when its coefficient is nonzero, or with
    ``dominance="top_quartile"`` when |beta| is in the top quartile of the
    nonzero magnitudes.
    """
    if dominance not in DOMINANCE:
        raise ValidationError(f"dominance must be one of {DOMINANCE}")
    if not fits:
        raise ValidationError("importance needs at least one fit")
    ids = tuple(fits[0][0])
    L = len(ids)
    counts = np.zeros(L, dtype=np.int64)
    totals = np.zeros(L)
    for location_ids, model in fits:
        if tuple(location_ids) != ids:
            raise ValidationError("fits cover different location universes")
        if len(model.beta) != L:
            raise ValidationError("model width does not match its location ids")
        dominant = _dominant(model.beta, dominance)
        counts += dominant
        totals += np.where(dominant, np.abs(model.beta), 0.0)
    mean_abs = np.divide(totals, counts, out=np.zeros(L), where=counts > 0)
    importance = mean_abs * counts / len(fits)
    return LocationImportance(
        location_ids=ids,
        selection_count=counts,
        mean_abs_coef=mean_abs,
        importance=importance,
        total_fits=len(fits),
    )


def cce_candidates(
    importance: LocationImportance,
    coordinates: Mapping[str, Tuple[float, float]],
    n: int,
    min_spacing_km: float = 0.0,
) -> List[str]:
    """Greedy pick of up to `n` locations by descending importance.

    A candidate closer than `min_spacing_km` to an already chosen site is
    skipped. Ties go to the smaller location id; zero-importance locations are
    never chosen.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    order = sorted(
        (i for i in range(len(importance.location_ids)) if importance.importance[i] > 0.0),
        key=lambda i: (-importance.importance[i], importance.location_ids[i]),
    )
    chosen: List[str] = []
    for i in order:
        location_id = importance.location_ids[i]
        lat, lon = coordinates[location_id]
        if min_spacing_km > 0.0 and any(
            operators.haversine(lat, lon, *coordinates[c]) < min_spacing_km for c in chosen
        ):
            continue
        chosen.append(location_id)
        if len(chosen) == n:
            break
    return chosen


def coordinates_of(locations: Sequence[LocationSeries]) -> Dict[str, Tuple[float, float]]:  # noqa: D103
    return {loc.location_id: (loc.lat, loc.lon) for loc in locations}


def importance_frame(
    importance: LocationImportance, coordinates: Mapping[str, Tuple[float, float]]
) -> pd.DataFrame:
    """Importance table sorted by descending importance, then id."""
    frame = pd.DataFrame(
        {
            "location_id": importance.location_ids,
            "lat": [coordinates[i][0] for i in importance.location_ids],
            "lon": [coordinates[i][1] for i in importance.location_ids],
            "selection_count": importance.selection_count,
            "mean_abs_coef": importance.mean_abs_coef,
            "importance": importance.importance,
        },
        columns=list(IMPORTANCE_COLUMNS),
    )
    return frame.sort_values(
        ["importance", "location_id"], ascending=[False, True], kind="mergesort"
    ).reset_index(drop=True)


def write_importance_csv(
    importance: LocationImportance, coordinates: Mapping[str, Tuple[float, float]], path: PathLike
) -> None:  # noqa: D103
    importance_frame(importance, coordinates).to_csv(path, index=False, lineterminator="\n")


def write_cce_geojson(
    importance: LocationImportance,
    coordinates: Mapping[str, Tuple[float, float]],
    chosen: Sequence[str],
    path: PathLike,
) -> None:
    """Chosen sites as a GeoJSON FeatureCollection of points, in rank order."""
    position = {i: k for k, i in enumerate(importance.location_ids)}
    features = []
    for rank, location_id in enumerate(chosen, start=1):
        k = position[location_id]
        lat, lon = coordinates[location_id]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {
                    "location_id": location_id,
                    "rank": rank,
                    "importance": float(importance.importance[k]),
                    "selection_count": int(importance.selection_count[k]),
                    "mean_abs_coef": float(importance.mean_abs_coef[k]),
                },
            }
        )
    document = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
