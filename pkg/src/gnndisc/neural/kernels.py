"""Kernel backend selection.

The compiled extension is used when it was built; setting the environment
variable ``GNNDISC_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GNNDISC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

scatter_add_rows = _impl.scatter_add_rows
segment_softmax = _impl.segment_softmax
segment_softmax_backward = _impl.segment_softmax_backward
attend = _impl.attend
attend_backward = _impl.attend_backward


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"compiled"`` (for benchmarks and tests)."""
    if name == "python":
        return _kernels_py
    from . import _kernels
    return _kernels
