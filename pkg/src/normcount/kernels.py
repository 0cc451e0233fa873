"""Kernel backend selection.

The compiled extension is preferred; NORMCOUNT_PURE=1 forces the numpy
fallback (used by the benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("NORMCOUNT_PURE") == "1":
    impl = _kernels_py
else:
    try:
        from . import _kernels as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _kernels_py

BACKEND = impl.BACKEND
pair_correlate = impl.pair_correlate
line_sum = impl.line_sum
proj_bin_many = impl.proj_bin_many


def both_backends():
    """(name, module) pairs for every importable backend."""
    out = [("python", _kernels_py)]
    try:
        from . import _kernels
        out.append(("cython", _kernels))
    except ImportError:
        pass
    return out
