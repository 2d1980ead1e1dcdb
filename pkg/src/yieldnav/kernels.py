"""Backend selection for the grid kernels.

The compiled extension is used when it imports; otherwise the pure-Python module
takes over. Set ``YIELDNAV_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("YIELDNAV_PURE"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"

cast_rays = _impl.cast_rays
integrate_rays = _impl.integrate_rays
segment_feasible = _impl.segment_feasible
grid_dijkstra = _impl.grid_dijkstra

__all__ = ["BACKEND", "cast_rays", "integrate_rays", "segment_feasible", "grid_dijkstra"]
