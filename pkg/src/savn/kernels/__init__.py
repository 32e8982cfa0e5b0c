"""Hot kernels with a compiled implementation and a numpy fallback.

The Cython build is used when it imports; set ``SAVN_KERNELS=python`` to force
the fallback (the benchmark and the cross-check tests do this).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SAVN_KERNELS", "auto") != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        if os.environ.get("SAVN_KERNELS") == "cython":
            raise

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
observe_codes = _impl.observe_codes
bfs_distances = _impl.bfs_distances
HEADING_STEPS = _pykernels.HEADING_STEPS

__all__ = [
    "BACKEND",
    "HEADING_STEPS",
    "bfs_distances",
    "lstm_backward",
    "lstm_forward",
    "observe_codes",
]
