"""Collection of the scalar operators used throughout the code base.

Every function here takes and returns plain floats so that the numba kernels in
`fast_ops.py` can inline them.
"""

import math

# Mean Earth radius used by every distance computation.
EARTH_RADIUS_KM = 6371.0


def sign(x: float) -> float:
    """Sign of x as a float, with sign(0) = 0."""
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def soft_threshold(z: float, t: float) -> float:
    r"""Soft-thresholding operator $S(z, t) = \mathrm{sign}(z) \max(|z| - t, 0)$.

    Args:
    ----
        z: value to shrink
        t: nonnegative threshold

    Returns:
    -------
        The shrunk value.

    """
    if t < 0.0:
        raise ValueError("soft-threshold level must be nonnegative")
    return math.copysign(max(abs(z) - t, 0.0), z)


def is_close(x: float, y: float, tol: float = 1e-9) -> bool:
    """Mixed absolute/relative closeness."""
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def log_arrival(x: float, shifted: bool) -> float:
    """Log transform of an arrival quantity; `shifted` selects log(1 + x)."""
    if shifted:
        return math.log1p(x)
    return math.log(x)


def arrival_from_log(y: float, shifted: bool) -> float:
    """Inverse of `log_arrival`, clipped at zero for the shifted transform."""
    if shifted:
        return max(math.expm1(y), 0.0)
    return math.exp(y)


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km between two (lat, lon) pairs in degrees."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    a = min(1.0, max(0.0, a))
    return 2.0 * EARTH_RADIUS_KM * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))
