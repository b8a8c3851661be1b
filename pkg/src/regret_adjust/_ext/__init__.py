"""Hot kernels: compiled when the extension is built, numpy otherwise.

Set REGRET_ADJUST_PURE=1 to force the numpy fallback.
"""

import os

import numpy as np

from . import fallback

_native = None
if os.environ.get("REGRET_ADJUST_PURE", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _vertex as _native
    except ImportError:
        _native = None

BACKEND = "cython" if _native is not None else "python"
_impl = _native if _native is not None else fallback


def _vec(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def vertex_max(Q, g, c0, lower, upper, tie_tol=1e-12):
    """Max of 1/2 u'Qu + g'u + c0 over box vertices -> (value, bits over free coords)."""
    return _impl.vertex_max(
        np.ascontiguousarray(Q, dtype=np.float64), _vec(g), float(c0), _vec(lower), _vec(upper), tie_tol
    )


def rows_box_max(C, const_term, lower, upper):
    """Per-row max of C @ u + const over the box -> (values, maximizing vertices)."""
    return _impl.rows_box_max(np.ascontiguousarray(C, dtype=np.float64), _vec(const_term), _vec(lower), _vec(upper))


__all__ = ["BACKEND", "vertex_max", "rows_box_max", "fallback"]
