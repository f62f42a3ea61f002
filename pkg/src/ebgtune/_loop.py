"""Kernel selection: compiled extension when available, pure Python otherwise.

Set EBGTUNE_PURE_PYTHON=1 to force the fallback (used by the parity tests
and the benchmark).
"""

import os

from ._loop_py import (  # noqa: F401  (reason codes shared by both kernels)
    PHASE_IDLE,
    PHASE_OPEN,
    REASON_DIVERGED,
    REASON_END,
    REASON_RESET,
    REASON_TRIGGER,
)
from ._loop_py import run_span as run_span_py

if os.environ.get("EBGTUNE_PURE_PYTHON"):
    backend = "python"
    run_span = run_span_py
else:
    try:
        from ._loop_cy import run_span as run_span  # noqa: F811
    except ImportError:
        backend = "python"
        run_span = run_span_py
    else:
        backend = "cython"
