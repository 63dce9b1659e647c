"""Feature-space balance metrics: domain alignment (MMD) and class discriminability (J(W))."""
from __future__ import annotations

import numpy as np
from scipy.linalg import eigh

from ._backend import kernels

JW_RIDGE = 1e-6


def _as_matrix(a: np.ndarray, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    return a


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median of the pairwise distances ``|x_i - x_j|``, ``i < j``; 1.0 if that is zero."""
    d2 = kernels.sq_dists(pooled, pooled)
    iu = np.triu_indices(pooled.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.sqrt(np.median(d2[iu])))
    return med if med > 0.0 else 1.0


def mmd_rbf(a: np.ndarray, b: np.ndarray, bandwidth: float | None = None) -> float:
    """Squared MMD (biased V-statistic) with kernel ``exp(-|x-y|^2 / (2 sigma^2))``.

    ``sigma`` defaults to the median pairwise distance of the pooled sample.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("a and b must have the same number of columns")
    sigma = median_bandwidth(np.concatenate([a, b])) if bandwidth is None else float(bandwidth)
    gamma = 1.0 / (2.0 * sigma * sigma)
    kaa = np.exp(-gamma * kernels.sq_dists(a, a)).mean()
    kbb = np.exp(-gamma * kernels.sq_dists(b, b)).mean()
    kab = np.exp(-gamma * kernels.sq_dists(a, b)).mean()
    return max(0.0, float(kaa + kbb - 2.0 * kab))


def scatter_matrices(features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = _as_matrix(features, "features")
    y = np.asarray(labels)
    mu = x.mean(axis=0)
    d = x.shape[1]
    sb = np.zeros((d, d))
    sw = np.zeros((d, d))
    for c in np.unique(y):
        xc = x[y == c]
        mc = xc.mean(axis=0)
        diff = (mc - mu)[:, None]
        sb += xc.shape[0] * (diff @ diff.T)
        centred = xc - mc
        sw += centred.T @ centred
    return sb, sw


def discriminability_jw(features: np.ndarray, labels: np.ndarray) -> float:
    """Largest generalised eigenvalue of (S_b, S_w + 1e-6 I)."""
    x = _as_matrix(features, "features")
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise ValueError("need one label per feature row")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ValueError("J(W) needs at least two classes")
    if np.any(counts < 2):
        raise ValueError("J(W) needs at least two samples per class")
    sb, sw = scatter_matrices(x, y)
    sw = sw + JW_RIDGE * np.eye(sw.shape[0])
    vals = eigh(sb, sw, eigvals_only=True)
    return max(0.0, float(vals[-1]))
