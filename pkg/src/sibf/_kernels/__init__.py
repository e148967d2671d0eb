"""Backend selection for the per-frame update kernels.

The compiled Cython backend is used when available; the pure-NumPy
backend is the fallback and the reference.  Setting the environment
variable SIBF_PURE_PYTHON=1 forces the fallback (useful for debugging
and for the backend benchmark).
"""

import os

from . import _purepy

if os.environ.get("SIBF_PURE_PYTHON", "").strip() not in ("", "0"):
    _backend = _purepy
else:
    try:
        from . import _core as _backend
    except ImportError:
        _backend = _purepy

BACKEND = _backend.NAME

ewma_rank1 = _backend.ewma_rank1
fifo_rank1 = _backend.fifo_rank1
ewma_vec = _backend.ewma_vec
windowed_rank1_sum = _backend.windowed_rank1_sum
window_outputs = _backend.window_outputs
mil_rank1 = _backend.mil_rank1
pm_step = _backend.pm_step


def available_backends():
    """Names of importable backends (the active one is BACKEND)."""
    names = [_purepy.NAME]
    try:
        from . import _core
        names.append(_core.NAME)
    except ImportError:
        pass
    return names
