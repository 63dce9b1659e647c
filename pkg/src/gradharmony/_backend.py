"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; otherwise
the numpy fallback is used. Setting ``GRADHARMONY_PURE=1`` forces the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("GRADHARMONY_PURE", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


kernels, BACKEND = _load()


def available_backends() -> dict[str, ModuleType]:
    """All importable kernel modules keyed by name (used by tests and benchmarks)."""
    out: dict[str, ModuleType] = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
