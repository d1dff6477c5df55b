from typing import List, Sequence

import numpy as np
from hypothesis import settings
from hypothesis.strategies import composite, floats, integers

import arrivalcast
from arrivalcast.data_ingest import LocationSeries, month_range

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")


small_ints = integers(min_value=1, max_value=3)
small_floats = floats(min_value=-100, max_value=100, allow_nan=False)
med_ints = integers(min_value=1, max_value=20)
seeds = integers(min_value=0, max_value=2**32 - 1)
ndvi_values = floats(min_value=-1.0, max_value=1.0, allow_nan=False)
lats = floats(min_value=-89.0, max_value=89.0, allow_nan=False)
lons = floats(min_value=-179.0, max_value=179.0, allow_nan=False)


def assert_close(a: float, b: float, tol: float = 1e-9) -> None:
    assert arrivalcast.operators.is_close(a, b, tol), "Failure x=%r y=%r" % (a, b)


def assert_allclose(a: Sequence[float], b: Sequence[float], tol: float = 1e-9) -> None:
    np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=tol, atol=tol)


def grid_locations(
    rows: int, cols: int, months: int = 6, lat0: float = 15.0, lon0: float = 75.0, cell: float = 0.1
) -> List[LocationSeries]:
    """Locations on a regular grid whose NDVI is a deterministic pattern."""
    labels = month_range("2020-01", "2020-%02d" % months) if months <= 12 else None
    assert labels is not None
    out = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            values = 0.1 + 0.01 * np.arange(months) * ((i % 5) + 1) / 5.0
            out.append(
                LocationSeries(
                    location_id="L%03d" % i,
                    lat=round(lat0 + r * cell, 10),
                    lon=round(lon0 + c * cell, 10),
                    months=labels,
                    ndvi=np.clip(values, -1.0, 1.0),
                )
            )
    return out


@composite
def designs(draw, min_rows: int = 12, max_rows: int = 30, min_cols: int = 2, max_cols: int = 10) -> tuple:  # noqa: ANN001
    """A random Gaussian regression problem (X, y) drawn from a seed."""
    rng = np.random.Generator(np.random.PCG64(draw(seeds)))
    T = draw(integers(min_value=min_rows, max_value=max_rows))
    L = draw(integers(min_value=min_cols, max_value=max_cols))
    X = rng.standard_normal((T, L))
    beta = rng.standard_normal(L)
    y = 1.0 + X @ beta + 0.1 * rng.standard_normal(T)
    return X, y


