from __future__ import annotations

from typing import TYPE_CHECKING, Any, TypeVar

import numpy as np
from numba import njit as _njit
from numba import prange

from . import operators

if TYPE_CHECKING:
    from .data_ingest import Matrix, Vector

# TIP: Use `NUMBA_DISABLE_JIT=1 pytest tests/` to step through these kernels in pure Python.

# This code JIT compiles the hot loops of the solver and the spatial preprocessing.
# If you get an error, read the docs for NUMBA as to what is allowed
# in these functions.
Fn = TypeVar("Fn")


def njit(fn: Fn, **kwargs: Any) -> Fn:  # noqa: D103
    return _njit(inline="always", **kwargs)(fn)  # type: ignore


soft_threshold = njit(operators.soft_threshold)
haversine = njit(operators.haversine)


def _enet_sweep(
    Z: Matrix,
    resid: Vector,
    beta: Vector,
    col_sq: Vector,
    l1: float,
    l2: float,
    cols: np.ndarray,
) -> float:
    """One cyclic coordinate-descent sweep over the columns `cols` of `Z`.

    For each column j the partial-residual correlation

        rho_j = (1/T) sum_i z_ij (y_i - yhat_i^j)

    is soft-thresholded at `l1` and divided by `col_sq[j] + l2`. With standardized
    columns `col_sq[j] == 1`, which is the textbook update
    S(rho_j, lambda*gamma) / (1 + lambda*(1 - gamma)).

    `resid` and `beta` are updated in place.

    Args:
    ----
        Z: T x L design, Fortran ordered for column access
        resid: current residual y - beta0 - Z beta
        beta: coefficients
        col_sq: (1/T) sum_i z_ij^2 per column
        l1: lambda * gamma
        l2: lambda * (1 - gamma)
        cols: column indices to visit, in order

    Returns:
    -------
        Largest absolute coefficient change in the sweep.

    """
    T = Z.shape[0]
    max_delta = 0.0
    for j in cols:
        old = beta[j]
        rho = 0.0
        for i in range(T):
            rho += Z[i, j] * resid[i]
        rho = rho / T + col_sq[j] * old
        new = soft_threshold(rho, l1) / (col_sq[j] + l2)
        delta = new - old
        if delta != 0.0:
            for i in range(T):
                resid[i] -= Z[i, j] * delta
            beta[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


enet_sweep = njit(_enet_sweep)


def _box_mean(
    values: np.ndarray,
    present: np.ndarray,
    occupied: np.ndarray,
    radius: int,
    out: np.ndarray,
) -> None:
    """Neighborhood mean on a regular grid.

    `values` and `present` are (rows, cols, months). For every occupied cell the output
    is the mean over the (2r+1) x (2r+1) window of the values that are present in that
    month; windows with nothing present give NaN.
    """
    ni, nj, M = values.shape
    for i in prange(ni):
        i0 = max(0, i - radius)
        i1 = min(ni, i + radius + 1)
        for j in range(nj):
            if not occupied[i, j]:
                continue
            j0 = max(0, j - radius)
            j1 = min(nj, j + radius + 1)
            for m in range(M):
                total = 0.0
                count = 0
                for a in range(i0, i1):
                    for b in range(j0, j1):
                        if present[a, b, m]:
                            total += values[a, b, m]
                            count += 1
                if count > 0:
                    out[i, j, m] = total / count
                else:
                    out[i, j, m] = np.nan


box_mean = njit(_box_mean, parallel=True)


def _haversine_many(
    lats: Vector, lons: Vector, lat0: float, lon0: float, out: Vector
) -> None:
    """Distances (km) from every (lats[i], lons[i]) to (lat0, lon0)."""
    for i in prange(len(lats)):
        out[i] = haversine(lats[i], lons[i], lat0, lon0)


haversine_many = njit(_haversine_many, parallel=True)
