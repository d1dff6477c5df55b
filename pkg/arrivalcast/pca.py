from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data_ingest import Matrix, Vector
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Principal axes of a centered (optionally scaled) matrix.

    `components` is k x p with orthonormal rows in descending eigenvalue order;
    `eigenvalues` are the population variances along them.
    """

    mean: Vector
    components: Matrix
    eigenvalues: Vector
    scale: Optional[Vector] = None
    total_variance: float = 0.0

    @property
    def k(self) -> int:  # noqa: D102
        return self.components.shape[0]

    @property
    def p(self) -> int:  # noqa: D102
        return self.components.shape[1]

    def explained_variance_ratio(self) -> Vector:
        """Share of the total variance carried by each component."""
        if self.total_variance <= 0.0:
            return np.zeros(self.k)
        return self.eigenvalues / self.total_variance


def _orient(components: Matrix) -> Matrix:
    # Largest |entry| of every row positive; argmax picks the first on ties.
    lead = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), lead])
    signs[signs == 0.0] = 1.0
    return components * signs[:, None]


def fit_pca(Xhat: Matrix, k: Optional[int] = None, scale: bool = False) -> PcaModel:
    """Fit the top-k principal components of `Xhat` (T x p).

    Uses the economy SVD of the centered matrix, whose cost is governed by
    min(T, p). `k` defaults to min(T - 1, p). With `scale` the columns are also
    divided by their standard deviation (zero-variance columns left unscaled).
    """
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if Xhat.ndim != 2:
        raise ValidationError("Xhat must be 2-D")
    T, p = Xhat.shape
    if T < 2 or p < 1:
        raise ValidationError("PCA needs at least 2 rows and 1 column")
    k_max = min(T - 1, p)
    k = k_max if k is None else int(k)
    if not 1 <= k <= k_max:
        raise ValidationError(f"k must lie in [1, {k_max}], got {k}")

    mean = Xhat.mean(axis=0)
    centered = Xhat - mean
    spread = None
    if scale:
        spread = Xhat.std(axis=0)
        spread = np.where(spread > 0.0, spread, 1.0)
        centered = centered / spread
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = np.maximum(s[:k] ** 2 / T, 0.0)
    return PcaModel(
        mean=mean,
        components=_orient(vt[:k]),
        eigenvalues=eigenvalues,
        scale=spread,
        total_variance=float((centered * centered).sum() / T),
    )


def _standardize(model: PcaModel, Xhat: Matrix) -> Matrix:
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if Xhat.shape[-1] != model.p:
        raise ValidationError(f"expected {model.p} columns, got {Xhat.shape[-1]}")
    centered = Xhat - model.mean
    if model.scale is not None:
        centered = centered / model.scale
    return centered


def project(model: PcaModel, Xhat: Matrix) -> Matrix:
    """Factor scores F = (Xhat - mean) components'. Accepts a single row."""
    return _standardize(model, Xhat) @ model.components.T


def reconstruct(model: PcaModel, F: Matrix) -> Matrix:
    """Map factor scores back to the data space: mean + F components."""
    F = np.asarray(F, dtype=np.float64)
    out = F @ model.components
    if model.scale is not None:
        out = out * model.scale
    return out + model.mean
