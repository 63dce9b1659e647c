"""Two-task gradient harmonization.

``g1`` is the alignment-task gradient and ``g2`` the classification-task
gradient. A pair *conflicts* when ``g1 . g2 < 0``; non-conflicting pairs are
passed through untouched by every harmonizing method.

Methods
-------
gh
    Project each gradient onto the hyperplane orthogonal to the other. The
    angle between the pair goes from ``theta`` to ``pi - theta``.
ghpp-weighted
    Rescale ``g1`` by ``1 + 2 sin(beta/2)`` and ``g2`` by ``1 + 2 sin(beta_bar/2)``
    with ``beta = lam (theta - pi/2)`` and ``beta_bar = (lam - 1)(theta - pi/2)``.
ghpp-rotate
    Rotate ``g1`` by ``beta`` towards ``g2`` and ``g2`` by ``-beta_bar`` towards
    ``g1`` inside their common plane, so the pair ends up exactly orthogonal
    with norms unchanged.
flip-g1, flip-g2
    Negate one gradient. Only useful as an ablation baseline.

Every method can be written as ``tau1 * g1 + tau2 * g2``; :func:`harmonize`
reports those weights so a trainer can reweight the two losses instead of
editing gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np

from ._backend import kernels
from .vecmath import (
    DegenerateInputError,
    DimensionError,
    ParamVector,
    VectorLike,
    angle,
    as_vector,
    cosine_from_stats,
    weighted_sum,
)

NORM_FLOOR = 1e-30
DEFAULT_LAMBDA = 0.5
# |cos| within this of 1 counts as collinear
COLLINEAR_EPS = 1e-12


class Kind(str, Enum):
    NONE = "none"
    GH = "gh"
    GHPP_WEIGHTED = "ghpp-weighted"
    GHPP_ROTATE = "ghpp-rotate"
    FLIP_G1 = "flip-g1"
    FLIP_G2 = "flip-g2"


@dataclass(frozen=True)
class HarmonizeMethod:
    kind: Kind = Kind.GH
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        lam = float(self.lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def parse(cls, name: str, lam: float = DEFAULT_LAMBDA) -> "HarmonizeMethod":
        try:
            kind = Kind(name.strip().lower())
        except ValueError:
            known = ", ".join(k.value for k in Kind)
            raise ValueError(f"unknown method {name!r} (expected one of: {known})") from None
        return cls(kind, lam)

    @property
    def label(self) -> str:
        if self.kind in (Kind.GHPP_WEIGHTED, Kind.GHPP_ROTATE):
            return f"{self.kind.value}@{self.lam:g}"
        return self.kind.value


@dataclass(frozen=True)
class GradientPair:
    g1: ParamVector
    g2: ParamVector
    # (g1.g2, |g1|^2, |g2|^2), filled on construction
    stats: tuple[float, float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        g1 = as_vector(self.g1, name="g1")
        g2 = as_vector(self.g2, name="g2")
        if g1.shape != g2.shape:
            raise DimensionError(f"g1 has length {g1.shape[0]} but g2 has length {g2.shape[0]}")
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "stats", kernels.pair_stats(g1, g2))

    @property
    def inner(self) -> float:
        return self.stats[0]

    @property
    def conflict(self) -> bool:
        ip, n1, n2 = self.stats
        return ip < 0.0 and n1 >= NORM_FLOOR and n2 >= NORM_FLOOR

    @property
    def cosine(self) -> float:
        ip, n1, n2 = self.stats
        if n1 == 0.0 or n2 == 0.0:
            raise DegenerateInputError("angle is undefined for a zero gradient")
        return cosine_from_stats(ip, n1, n2)

    @property
    def theta(self) -> float:
        return angle(self.g1, self.g2)

    @property
    def collinear(self) -> bool:
        return abs(self.cosine) >= 1.0 - COLLINEAR_EPS


@dataclass(frozen=True)
class HarmonizeResult:
    method: HarmonizeMethod
    tilde_g1: ParamVector
    tilde_g2: ParamVector
    aggregate: ParamVector
    tau1: float
    tau2: float
    conflict: bool
    inner_product: float
    angle_before: float
    angle_after: float
    deviation_sum: float
    # GH on an antiparallel pair: both harmonized gradients vanish
    degenerate: bool = False

    def to_dict(self) -> dict:
        def num(x: float) -> float | None:
            return None if math.isnan(x) else x

        return {
            "method": self.method.kind.value,
            "lambda": self.method.lam,
            "tilde_g1": self.tilde_g1.tolist(),
            "tilde_g2": self.tilde_g2.tolist(),
            "aggregate": self.aggregate.tolist(),
            "tau1": self.tau1,
            "tau2": self.tau2,
            "conflict": self.conflict,
            "inner_product": self.inner_product,
            "angle_before": num(self.angle_before),
            "angle_after": num(self.angle_after),
            "deviation_sum": num(self.deviation_sum),
            "degenerate": self.degenerate,
        }


def _pair(p: GradientPair | tuple[VectorLike, VectorLike]) -> GradientPair:
    return p if isinstance(p, GradientPair) else GradientPair(*p)


def detect_conflict(p: GradientPair) -> bool:
    """True iff ``g1 . g2 < 0``. Orthogonal pairs do not conflict."""
    return _pair(p).conflict


def gh_pair(p: GradientPair) -> tuple[ParamVector, ParamVector]:
    p = _pair(p)
    if not p.conflict:
        return p.g1, p.g2
    ip, n1, n2 = p.stats
    t1, t2 = kernels.project_out(p.g1, p.g2, ip / n2, ip / n1)
    return t1, t2


def gh_aggregate(p: GradientPair) -> ParamVector:
    t1, t2 = gh_pair(p)
    return t1 + t2


def gh_weights(p: GradientPair) -> tuple[float, float]:
    p = _pair(p)
    if not p.conflict:
        return 1.0, 1.0
    ip, n1, n2 = p.stats
    return 1.0 - ip / n1, 1.0 - ip / n2


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    return lam


def ghpp_weights(p: GradientPair, lam: float = DEFAULT_LAMBDA) -> tuple[float, float]:
    lam = _check_lambda(lam)
    p = _pair(p)
    if not p.conflict:
        return 1.0, 1.0
    excess = p.theta - math.pi / 2
    return (
        1.0 + 2.0 * math.sin(lam * excess / 2.0),
        1.0 + 2.0 * math.sin((lam - 1.0) * excess / 2.0),
    )


def ghpp_aggregate(p: GradientPair, lam: float = DEFAULT_LAMBDA) -> ParamVector:
    p = _pair(p)
    tau1, tau2 = ghpp_weights(p, lam)
    if not p.conflict:
        return p.g1 + p.g2
    return weighted_sum(p.g1, p.g2, tau1, tau2)


def _rotation_frame(p: GradientPair) -> tuple[np.ndarray, np.ndarray, float]:
    """Orthonormal basis ``(u, v)`` of span{g1, g2} with ``u`` along g1, plus |g2 - proj|."""
    ip, n1, _ = p.stats
    u = p.g1 / math.sqrt(n1)
    w = p.g2 - (ip / n1) * p.g1
    w_norm = math.sqrt(kernels.norm_sq(w))
    return u, w / w_norm, w_norm


def _ghpp_rotate_full(p: GradientPair, lam: float) -> tuple[ParamVector, ParamVector, float, float]:
    if p.collinear:
        raise DegenerateInputError("ghpp-rotate needs linearly independent gradients; the rotation plane is undefined")
    ip, n1, n2 = p.stats
    theta = p.theta
    excess = theta - math.pi / 2
    beta1 = lam * excess
    beta2 = (1.0 - lam) * excess
    r1, r2 = math.sqrt(n1), math.sqrt(n2)
    u, v, w_norm = _rotation_frame(p)
    phi = theta - beta2  # angle of the rotated g2 measured from g1
    if beta1 == 0.0:
        t1 = p.g1
    else:
        t1 = r1 * math.cos(beta1) * u + r1 * math.sin(beta1) * v
    if beta2 == 0.0:
        t2 = p.g2
    else:
        t2 = r2 * math.cos(phi) * u + r2 * math.sin(phi) * v
    # same vectors expressed as tau1*g1 + tau2*g2, using v = (g2 - c*g1) / w_norm
    c = ip / n1
    a1, b1 = (1.0, 0.0) if beta1 == 0.0 else (
        math.cos(beta1) - r1 * math.sin(beta1) * c / w_norm,
        r1 * math.sin(beta1) / w_norm,
    )
    a2, b2 = (0.0, 1.0) if beta2 == 0.0 else (
        r2 * math.cos(phi) / r1 - r2 * math.sin(phi) * c / w_norm,
        r2 * math.sin(phi) / w_norm,
    )
    return t1, t2, a1 + a2, b1 + b2


def ghpp_rotate(p: GradientPair, lam: float = DEFAULT_LAMBDA) -> tuple[ParamVector, ParamVector]:
    lam = _check_lambda(lam)
    p = _pair(p)
    if not p.conflict:
        return p.g1, p.g2
    t1, t2, _, _ = _ghpp_rotate_full(p, lam)
    return t1, t2


def sign_flip(p: GradientPair, which: Literal["g1", "g2"]) -> tuple[ParamVector, ParamVector]:
    p = _pair(p)
    if which == "g1":
        return -p.g1, p.g2
    if which == "g2":
        return p.g1, -p.g2
    raise ValueError(f"which must be 'g1' or 'g2', got {which!r}")


def _safe_angle(a: np.ndarray, b: np.ndarray) -> float:
    try:
        return angle(a, b)
    except DegenerateInputError:
        return math.nan


def harmonize(method: HarmonizeMethod, p: GradientPair) -> HarmonizeResult:
    p = _pair(p)
    kind, lam = method.kind, method.lam
    conflict = p.conflict
    ip = p.inner
    theta = _safe_angle(p.g1, p.g2)
    degenerate = False

    if kind in (Kind.FLIP_G1, Kind.FLIP_G2):
        which = "g1" if kind is Kind.FLIP_G1 else "g2"
        t1, t2 = sign_flip(p, which)
        tau1, tau2 = (-1.0, 1.0) if which == "g1" else (1.0, -1.0)
        after = math.pi - theta
        return HarmonizeResult(method, t1, t2, t1 + t2, tau1, tau2, conflict, ip,
                               theta, after, math.pi, False)

    if kind is Kind.NONE or not conflict:
        return HarmonizeResult(method, p.g1, p.g2, p.g1 + p.g2, 1.0, 1.0, conflict, ip,
                               theta, theta, 0.0 if not math.isnan(theta) else math.nan)

    if kind is Kind.GH:
        t1, t2 = gh_pair(p)
        tau1, tau2 = gh_weights(p)
        degenerate = p.collinear
    elif kind is Kind.GHPP_WEIGHTED:
        tau1, tau2 = ghpp_weights(p, lam)
        t1, t2 = tau1 * p.g1, tau2 * p.g2
    elif kind is Kind.GHPP_ROTATE:
        t1, t2, tau1, tau2 = _ghpp_rotate_full(p, lam)
    else:  # pragma: no cover
        raise ValueError(f"unhandled method {kind}")

    if degenerate:
        after = dev = math.nan
    else:
        after = _safe_angle(t1, t2)
        dev = _safe_angle(p.g1, t1) + _safe_angle(p.g2, t2)
    return HarmonizeResult(method, t1, t2, t1 + t2, tau1, tau2, conflict, ip,
                           theta, after, dev, degenerate)


def deviation_report(p: GradientPair, method: HarmonizeMethod) -> tuple[float, float, float]:
    """``(angle_before, angle_after, deviation_sum)`` in radians.

    ``angle_after`` and ``deviation_sum`` are NaN when a harmonized gradient
    vanishes (GH on an antiparallel pair); check ``harmonize(...).degenerate``.
    """
    p = _pair(p)
    _, n1, n2 = p.stats
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateInputError("deviation angles are undefined for a zero gradient")
    r = harmonize(method, p)
    return r.angle_before, r.angle_after, r.deviation_sum


def verify_lemma1_qp(
    g1: VectorLike,
    g2: VectorLike,
    samples: int = 1000,
    *,
    seed: int = 0,
    tol: float = 1e-9,
) -> bool:
    """Check numerically that the GH projection of ``g1`` solves

        min_x  0.5 * |g1 - x|^2   s.t.  x . g1 >= 0,  x . g2 >= 0

    by drawing ``samples`` feasible points around the closed form and making
    sure none of them is closer to ``g1`` by more than ``tol * max(1, |g1|^2)``.
    Half the draws are pushed onto the active constraint ``x . g2 = 0``.
    """
    p = GradientPair(g1, g2)
    if not p.conflict:
        raise ValueError("verify_lemma1_qp needs a conflicting pair (g1 . g2 < 0)")
    if samples < 1:
        raise ValueError("samples must be positive")
    t1, _ = gh_pair(p)
    g1a, g2a = p.g1, p.g2
    _, n1, n2 = p.stats
    r1 = math.sqrt(n1)
    best = 0.5 * float(np.sum((g1a - t1) ** 2))
    slack = tol * max(1.0, n1)
    rng = np.random.default_rng(seed)
    dim = g1a.shape[0]

    found = 0
    for _ in range(1000):
        batch = max(2 * (samples - found), 64)
        d = rng.standard_normal((batch, dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        scale = r1 * 10.0 ** rng.uniform(-8.0, 0.5, size=(batch, 1))
        x = t1 + scale * d
        on_face = rng.random(batch) < 0.5
        x[on_face] -= np.outer(x[on_face] @ g2a / n2, g2a)
        feasible = (x @ g1a >= 0.0) & (x @ g2a >= -1e-12 * r1 * math.sqrt(n2))
        x = x[feasible][: samples - found]
        dist = 0.5 * np.sum((g1a - x) ** 2, axis=1)
        if np.any(dist < best - slack):
            return False
        found += x.shape[0]
        if found >= samples:
            return True
    raise RuntimeError("could not draw enough feasible points")
