"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``GPTSCORE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("GPTSCORE_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    IMPLEMENTATION = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        IMPLEMENTATION = "cython"
    except ImportError:
        kernels = _kernels_py
        IMPLEMENTATION = "python"

__all__ = ["kernels", "IMPLEMENTATION"]
