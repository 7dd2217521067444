"""Kernel backend selection.

The compiled extension is used when importable; otherwise (or when
``MIXED_TRAFFIC_PURE_PYTHON`` is set to a non-empty value other than ``0``)
the numpy fallback is.  ``BACKEND`` names the active one.
"""
import os

from . import _fallback

_force_py = os.environ.get("MIXED_TRAFFIC_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-python backend forced")
    from ._ext import kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

idm_batch = _impl.idm_batch
sumtree_update = _impl.sumtree_update
sumtree_find = _impl.sumtree_find
categorical_projection = _impl.categorical_projection
adam_update = _impl.adam_update

__all__ = ["BACKEND", "idm_batch", "sumtree_update", "sumtree_find",
           "categorical_projection", "adam_update"]
