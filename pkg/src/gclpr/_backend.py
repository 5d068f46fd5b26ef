"""Select the compiled kernel when available, else the numpy fallback.

Set ``GCLPR_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pycore

if os.environ.get("GCLPR_PURE_PYTHON"):
    _impl = _pycore
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pycore

BACKEND: str = _impl.NAME
local_fit_batch = _impl.local_fit_batch


def available() -> dict:
    """Map of backend name -> kernel function for every importable backend."""
    out = {"python": _pycore.local_fit_batch}
    try:
        from . import _core

        out["cython"] = _core.local_fit_batch
    except ImportError:
        pass
    return out
