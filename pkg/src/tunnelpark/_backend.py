"""Kernel backend selection.

The compiled extension is used when it imports; ``TUNNELPARK_PURE_PYTHON=1``
forces the pure-Python kernels (useful for debugging and benchmarking).
"""
import os

from . import _kernels_py

if os.environ.get("TUNNELPARK_PURE_PYTHON") == "1":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND

__all__ = ["kernels", "BACKEND", "_kernels_py"]
