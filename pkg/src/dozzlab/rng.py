"""Counter-based random streams, Monte Carlo estimates and the batch runner.

Every Monte Carlo operation splits its samples into fixed-size batches.  Batch
``b`` draws from a Philox generator keyed by ``(seed, b)``, so a batch's
random numbers do not depend on how batches are scheduled over workers.
Per-batch outputs are concatenated in batch order before any reduction, which
makes every estimate bit-identical for any worker count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DEFAULT_SEED",
    "MCEstimate",
    "batch_stream",
    "resolve_threads",
    "run_batches",
    "estimate_from_values",
    "ratio_estimate",
]

DEFAULT_SEED = 0xD022
THREADS_ENV = "DOZZLAB_THREADS"


def batch_stream(seed: int, batch_index: int, tag: int = 0) -> np.random.Generator:
    """Generator for one batch; ``tag`` separates independent sub-experiments."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(tag), int(batch_index)])
    return np.random.Generator(np.random.Philox(ss))


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else the environment override, else the CPU count."""
    if threads is None or threads == 0:
        env = os.environ.get(THREADS_ENV)
        if env:
            threads = int(env)
    if not threads:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def run_batches(
    fn: Callable[[int, int, np.random.Generator], np.ndarray],
    n_samples: int,
    seed: int,
    batch_size: int,
    threads: int | None = None,
    tag: int = 0,
) -> np.ndarray:
    """Evaluate ``fn(batch_index, n_in_batch, rng)`` over all batches.

    ``fn`` returns an array whose first axis has length ``n_in_batch``.
    """
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    n_batches = -(-n_samples // batch_size)
    sizes = [min(batch_size, n_samples - b * batch_size) for b in range(n_batches)]

    def job(b: int) -> np.ndarray:
        return np.asarray(fn(b, sizes[b], batch_stream(seed, b, tag)))

    workers = min(resolve_threads(threads), n_batches)
    if workers == 1:
        parts = [job(b) for b in range(n_batches)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(n_batches)))
    return np.concatenate(parts, axis=0)


@dataclass
class MCEstimate:
    value: float
    stderr: float
    n_samples: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "diagnostics": dict(self.diagnostics),
        }

    def scaled(self, factor: float) -> "MCEstimate":
        return MCEstimate(
            self.value * factor, self.stderr * abs(factor), self.n_samples, self.seed, dict(self.diagnostics)
        )


def estimate_from_values(values: np.ndarray, seed: int, **diagnostics) -> MCEstimate:
    """Sample mean with the plain CLT standard error."""
    v = np.asarray(values, dtype=float)
    n = v.size
    mean = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    share = float(np.max(np.abs(v)) / np.sum(np.abs(v))) if np.any(v) else 0.0
    diag = {"max_weight_share": share, "ess": float(n)}
    diag.update(diagnostics)
    return MCEstimate(mean, se, n, int(seed), diag)


def ratio_estimate(num: np.ndarray, den: np.ndarray, seed: int, **diagnostics) -> MCEstimate:
    """Self-normalised ratio sum(num)/sum(den) with a delta-method stderr."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    r = float(num.sum() / den.sum())
    resid = num - r * den
    se = float(math.sqrt(np.sum(resid**2)) / abs(den.sum())) if n > 1 else math.inf
    ess = float(den.sum() ** 2 / np.sum(den**2))
    diag = {"ess": ess, "max_weight_share": float(np.max(np.abs(den)) / np.sum(np.abs(den)))}
    diag.update(diagnostics)
    return MCEstimate(r, se, n, int(seed), diag)
