"""Numpy fallback for the compiled kernels in ``_ckernels.pyx``."""
from __future__ import annotations

import numpy as np


def dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def norm_sq(a: np.ndarray) -> float:
    return float(np.dot(a, a))


def pair_stats(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    return float(np.dot(a, b)), float(np.dot(a, a)), float(np.dot(b, b))


def project_out(g1: np.ndarray, g2: np.ndarray, c1: float, c2: float) -> tuple[np.ndarray, np.ndarray]:
    return g1 - c1 * g2, g2 - c2 * g1


def weighted_sum(a: np.ndarray, b: np.ndarray, wa: float, wb: float) -> np.ndarray:
    return wa * a + wb * b


def sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
