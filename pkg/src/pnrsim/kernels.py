"""Hot-loop dispatch: compiled extension when available, numpy/Python otherwise.

Set ``PNRSIM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("PNRSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

rk4_transient = _impl.rk4_transient
single_pole = _impl.single_pole
first_crossings = _impl.first_crossings

__all__ = ["BACKEND", "rk4_transient", "single_pole", "first_crossings"]
