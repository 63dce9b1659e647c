"""Gradient harmonization for two conflicting training objectives."""
from ._backend import BACKEND
from .harmonizer import (
    GradientPair,
    HarmonizeMethod,
    HarmonizeResult,
    Kind,
    deviation_report,
    detect_conflict,
    gh_aggregate,
    gh_pair,
    gh_weights,
    ghpp_aggregate,
    ghpp_rotate,
    ghpp_weights,
    harmonize,
    sign_flip,
    verify_lemma1_qp,
)
from .vecmath import DegenerateInputError, DimensionError, angle, as_vector, dot, norm_sq

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DegenerateInputError",
    "DimensionError",
    "GradientPair",
    "HarmonizeMethod",
    "HarmonizeResult",
    "Kind",
    "angle",
    "as_vector",
    "deviation_report",
    "detect_conflict",
    "dot",
    "gh_aggregate",
    "gh_pair",
    "gh_weights",
    "ghpp_aggregate",
    "ghpp_rotate",
    "ghpp_weights",
    "harmonize",
    "norm_sq",
    "sign_flip",
    "verify_lemma1_qp",
]
