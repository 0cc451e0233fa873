"""Counting lattice solutions of trace-norm equations over quartic
fields: descent, local densities, smooth weights, bilinear counts, and
main-term predictions, at desk scale."""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
