"""Kernel backend selection.

The compiled ``_yee`` extension is used when importable; otherwise the
numpy implementation in ``_fallback``.  Setting ``TDENCLOSURE_BACKEND``
to ``numpy`` forces the fallback.
"""

import os

from . import _fallback

_native = None
if os.environ.get("TDENCLOSURE_BACKEND", "").lower() not in ("numpy", "python", "fallback"):
    try:
        from . import _yee as _native
    except ImportError:  # pragma: no cover - depends on the build
        _native = None

BACKENDS = {"numpy": _fallback}
if _native is not None:
    BACKENDS["cython"] = _native

BACKEND = "cython" if _native is not None else "numpy"


def get_backend(name=None):
    """Kernel module by name (``None`` -> the import-time default)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
