"""Dimension-checked float64 vector arithmetic.

Parameter vectors and gradients are plain 1-D ``numpy.ndarray`` objects of
dtype float64. :func:`as_vector` is the single validating constructor; the
other helpers accept anything it accepts.
"""
from __future__ import annotations

import math
from typing import Iterable, Union

import numpy as np

from ._backend import kernels

ParamVector = np.ndarray
VectorLike = Union[np.ndarray, Iterable[float]]


class DimensionError(ValueError):
    """Two vectors that must share a length do not."""


class DegenerateInputError(ValueError):
    """An operation is undefined for the given input (zero vector, collinear pair, ...)."""


def as_vector(values: VectorLike, *, name: str = "vector") -> ParamVector:
    """Validate and convert ``values`` to a contiguous, read-only float64 vector.

    Raises ValueError for empty, non-1-D or non-finite input.
    """
    arr = np.array(values, dtype=np.float64, copy=True, order="C")
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    arr.flags.writeable = False
    return arr


def _check_same_len(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def _c(a: VectorLike) -> np.ndarray:
    # cheap path for arrays already validated by as_vector
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and a.ndim == 1 and a.flags.c_contiguous:
        return a
    return as_vector(a)


def dot(a: VectorLike, b: VectorLike) -> float:
    a, b = _c(a), _c(b)
    _check_same_len(a, b)
    return kernels.dot(a, b)


def norm_sq(a: VectorLike) -> float:
    return kernels.norm_sq(_c(a))


def norm(a: VectorLike) -> float:
    return math.sqrt(norm_sq(a))


def pair_stats(a: VectorLike, b: VectorLike) -> tuple[float, float, float]:
    """``(dot(a, b), norm_sq(a), norm_sq(b))`` computed in one pass."""
    a, b = _c(a), _c(b)
    _check_same_len(a, b)
    return kernels.pair_stats(a, b)


def cosine_from_stats(ab: float, aa: float, bb: float) -> float:
    """Cosine of the angle, clamped to [-1, 1]."""
    c = ab / (math.sqrt(aa) * math.sqrt(bb))
    return min(1.0, max(-1.0, c))


def angle(a: VectorLike, b: VectorLike) -> float:
    """Angle between two nonzero vectors in radians, in [0, pi]."""
    a, b = _c(a), _c(b)
    ab, aa, bb = pair_stats(a, b)
    if aa == 0.0 or bb == 0.0:
        raise DegenerateInputError("angle is undefined for a zero vector")
    c = cosine_from_stats(ab, aa, bb)
    if abs(c) <= 0.5:
        return math.acos(c)
    # arccos is ill-conditioned near +-1; use 2*atan2(|a^ - b^|, |a^ + b^|)
    ua = a / math.sqrt(aa)
    ub = b / math.sqrt(bb)
    return 2.0 * math.atan2(math.sqrt(kernels.norm_sq(ua - ub)), math.sqrt(kernels.norm_sq(ua + ub)))


def weighted_sum(a: VectorLike, b: VectorLike, wa: float, wb: float) -> ParamVector:
    """``wa * a + wb * b``."""
    a, b = _c(a), _c(b)
    _check_same_len(a, b)
    return kernels.weighted_sum(a, b, float(wa), float(wb))
