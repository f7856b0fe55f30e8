"""Select the sweep-kernel implementation at import time.

The compiled extension is preferred when it imported cleanly; otherwise
the pure-NumPy module takes over with identical semantics. Setting the
environment variable EVENTORDER_PURE_PYTHON=1 forces the fallback, which
is useful for benchmarking and for debugging suspected kernel issues.
"""

import os

if os.environ.get("EVENTORDER_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

sinkhorn_log = kernels.sinkhorn_log
sinkhorn_log_grad = kernels.sinkhorn_log_grad


def backend_name() -> str:
    """Which kernel implementation is active: "compiled" or "python"."""
    return kernels.BACKEND_NAME
