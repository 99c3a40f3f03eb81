"""Kernel backend selection.

The compiled extension :mod:`frictionhjb._core` is used when it imports;
otherwise the numpy implementations in :mod:`frictionhjb._core_py` are used.
Setting ``FRICTIONHJB_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _core_py
from ._core_py import NONE, SNAP, STOP

BACKEND = "python"
_impl = _core_py

if os.environ.get("FRICTIONHJB_PURE_PYTHON") != "1":
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

interp_1d = _impl.interp_1d
interp_2d = _impl.interp_2d
sl_min_1d = _impl.sl_min_1d
sl_min_2d = _impl.sl_min_2d
prox_pwl = _impl.prox_pwl


def backends():
    """Map backend name to kernel module for every importable backend."""
    out = {"python": _core_py}
    try:
        from . import _core
    except ImportError:
        return out
    out["cython"] = _core
    return out


__all__ = [
    "BACKEND", "NONE", "SNAP", "STOP", "backends",
    "interp_1d", "interp_2d", "prox_pwl", "sl_min_1d", "sl_min_2d",
]
