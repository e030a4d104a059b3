"""Backend selection for the hot kernels.

The compiled extension is preferred; the numpy fallback is used when it
is missing or when the environment variable ``CNNEQ_PURE_PYTHON`` is
set to ``1``.
"""

import os

from . import _kernels_py

if os.environ.get("CNNEQ_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
queue_departures = _impl.queue_departures

__all__ = ["BACKEND", "conv1d_forward", "conv1d_backward", "queue_departures"]
