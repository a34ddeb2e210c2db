"""Kernel dispatch: compiled Cython core with a pure-NumPy fallback.

Set MSVAR_DISABLE_EXT=1 to force the fallback (useful for debugging and for
the kernel benchmark in benchmarks/bench_kernels.py).
"""

import os

from . import _ref

if os.environ.get("MSVAR_DISABLE_EXT"):
    _impl = _ref
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _ref

BACKEND = "cython" if _impl is not _ref else "python"
UNDERFLOW_FLOOR = _ref.UNDERFLOW_FLOOR

filter_forward = _impl.filter_forward
smooth_backward = _impl.smooth_backward
sample_path = _impl.sample_path

__all__ = [
    "BACKEND",
    "UNDERFLOW_FLOOR",
    "filter_forward",
    "smooth_backward",
    "sample_path",
]
