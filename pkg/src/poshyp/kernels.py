"""Backend selection for the time-stepping kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation. Set ``POSHYP_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("POSHYP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
feedback_trace = _impl.feedback_trace
delay_trace = _impl.delay_trace
upwind_feedback = _impl.upwind_feedback
upwind_delay = _impl.upwind_delay


def available_backends():
    out = {"python": _kernels_py}
    try:
        from . import _kernels_c

        out["cython"] = _kernels_c
    except ImportError:
        pass
    return out
