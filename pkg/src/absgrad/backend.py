"""Kernel backend selection.

The compiled kernels are preferred when the extension built; the
pure-Python twins are the fallback.  Set ABSGRAD_PURE_PYTHON=1 to force
the fallback (used by the benchmark and the parity tests).
"""

import os

from . import _kernels_py

if os.environ.get("ABSGRAD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

forward_sweep = _impl.forward_sweep
reverse_sweep = _impl.reverse_sweep
