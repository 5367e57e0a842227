"""Kernel backend selection.

The compiled extension ``_native`` (Cython) is preferred when it imports
cleanly; the numpy implementation is a complete fallback. Set the
environment variable ``LOOMFLOW_BACKEND=numpy`` (or ``native``) before the
first import to force a choice, e.g. for benchmarking.
"""
from __future__ import annotations

import importlib
import os

from . import _numpy
from ._common import COND_MAX

_FORCED = os.environ.get("LOOMFLOW_BACKEND", "").strip().lower()


def _try_native():
    try:
        return importlib.import_module(__name__ + "._native")
    except ImportError:
        return None


if _FORCED == "numpy":
    _impl = _numpy
elif _FORCED == "native":
    _impl = _try_native()
    if _impl is None:
        raise ImportError("LOOMFLOW_BACKEND=native requested but the compiled extension is not built")
else:
    _impl = _try_native() or _numpy

BACKEND: str = _impl.BACKEND
poly_expand = _impl.poly_expand
flow_update = _impl.flow_update


def available_backends() -> dict[str, object]:
    """Importable backend modules keyed by name (for benchmarks and parity tests)."""
    out: dict[str, object] = {"numpy": _numpy}
    native = _try_native()
    if native is not None:
        out["native"] = native
    return out
