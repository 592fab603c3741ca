"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise (or when the
``HPS_PURE_PYTHON`` environment variable is set) the numpy fallbacks run.
"""
import os

from hps import _pykernels

if os.environ.get("HPS_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from hps import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

thin = _impl.thin
blur3 = _impl.blur3
label8 = _pykernels.label8

__all__ = ["BACKEND", "thin", "blur3", "label8"]
