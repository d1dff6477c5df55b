# type: ignore
"""Reference implementations the test-suite checks the fast paths against."""

from typing import Sequence, Tuple

import numpy as np

from . import operators


def ols(X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    "Intercept and slopes from the normal equations"
    A = np.column_stack([np.ones(len(y)), X])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    return float(coef[0]), coef[1:]


def ridge(X: np.ndarray, y: np.ndarray, lam: float) -> Tuple[float, np.ndarray]:
    """Closed-form minimizer of (1/2T)||y - b0 - Xb||^2 + (lam/2)||b||^2 with b0 free."""
    T, p = X.shape
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    beta = np.linalg.solve(Xc.T @ Xc / T + lam * np.eye(p), Xc.T @ yc / T)
    return float(y.mean() - X.mean(axis=0) @ beta), beta


def orthogonal_lasso(F: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Lasso of ||y - F a||^2 + lam ||a||_1 for F with orthogonal columns."""
    norms = (F * F).sum(axis=0)
    return np.array(
        [operators.soft_threshold(F[:, i] @ y / norms[i], lam / (2.0 * norms[i])) for i in range(F.shape[1])]
    )


def brute_percentile(values: Sequence[float], q: float) -> float:
    "Linear-interpolation percentile by sorting"
    s = sorted(values)
    pos = (len(s) - 1) * q / 100.0
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def lasso_kkt_gap(
    X: np.ndarray, y: np.ndarray, beta0: float, beta: np.ndarray, lam: float
) -> float:
    """Largest violation of the lasso optimality conditions for
    (1/2T)||y - b0 - Xb||^2 + lam ||b||_1 with b0 free."""
    T = len(y)
    g = X.T @ (y - beta0 - X @ beta) / T
    active = beta != 0.0
    gap_active = np.abs(g[active] - lam * np.sign(beta[active]))
    gap_zero = np.maximum(np.abs(g[~active]) - lam, 0.0)
    return float(max(gap_active.max(initial=0.0), gap_zero.max(initial=0.0)))
