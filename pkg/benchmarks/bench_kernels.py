"""Compiled kernels against the numpy fallback on realistic batch shapes.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is timed on
identical inputs with both backends and the outputs are compared.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from dozzlab import _kernels_py
from dozzlab.cylinder import BATCH, build_cylinder, default_horizon
from dozzlab.special import make_params

try:
    from dozzlab import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _cases(rng):
    p = make_params(1.0, 1.0)
    ens = build_cylinder(default_horizon(p, 1.7))
    m = ens.decay.size
    xi = rng.standard_normal((BATCH, ens.rows, m))
    lateral = (xi, ens.decay, ens.innov, ens.init_sd, ens.basis, 1.0, ens.var, ens.dtheta)

    n_cells = 7339
    x = np.asfortranarray(rng.standard_normal((n_cells, BATCH)))
    shift = rng.uniform(0.0, 2.0, n_cells)
    a = rng.uniform(0.0, 1e-3, n_cells)
    colsum = (x, shift, a, 1.0)

    k = 200_000
    d = rng.uniform(0.0, 0.1, k)
    r1 = rng.uniform(1e-3, 0.05, k)
    r2 = rng.uniform(1e-3, 0.05, k)
    circle = (d, r1, r2)
    return {
        "lateral_mass": lateral,
        "exp_weighted_colsum": colsum,
        "circle_log_average": circle,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run pip install -e . first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, args_ in _cases(rng).items():
        py = getattr(_kernels_py, name)
        cy = getattr(_compiled, name)
        t_py = min(timeit.repeat(lambda: py(*args_), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: cy(*args_), number=1, repeat=args.repeat))
        a, b = np.asarray(py(*args_)), np.asarray(cy(*args_))
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{name:<22}{1e3 * t_py:>12.2f}{1e3 * t_cy:>12.2f}{t_py / t_cy:>10.2f}{diff:>15.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
