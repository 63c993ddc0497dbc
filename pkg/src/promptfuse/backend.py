"""Selects the kernel backend at import time.

The compiled extension (``promptfuse._accel``) is preferred when it built
and imports cleanly; otherwise the pure-numpy kernels take over.  Set
``PROMPTFUSE_NO_ACCEL=1`` to force the pure-Python backend, e.g. for the
backend benchmark or to rule the extension out while debugging.
"""

from __future__ import annotations

import os

from . import _kernels_py

ZERO_NORM_MSG = _kernels_py.ZERO_NORM_MSG

if os.environ.get("PROMPTFUSE_NO_ACCEL") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _accel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py


def backend_name() -> str:
    """Either ``"compiled"`` or ``"python"``."""
    return "python" if _impl is _kernels_py else "compiled"


encode_batch = _impl.encode_batch
encode_grad_batch = _impl.encode_grad_batch
fused_encode_batch = _impl.fused_encode_batch
