"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``DOZZLAB_PURE_PYTHON=1`` to force the numpy implementations.
exp_weighted_colsum always uses numpy: its runtime-dispatched SIMD exp beats
the scalar libm loop of the compiled version (see benchmarks/).
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("DOZZLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

lateral_mass = _impl.lateral_mass
exp_weighted_colsum = _kernels_py.exp_weighted_colsum
circle_log_average = _impl.circle_log_average

__all__ = ["BACKEND", "lateral_mass", "exp_weighted_colsum", "circle_log_average"]
