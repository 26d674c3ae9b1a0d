import numpy as np
import pytest

from dozzlab.rng import DEFAULT_SEED, MCEstimate, batch_stream, estimate_from_values, ratio_estimate, resolve_threads, run_batches


def _fn(b, m, rng):
    return rng.standard_normal(m) + b


def test_streams_reproducible_and_distinct():
    a = batch_stream(7, 3).standard_normal(4)
    b = batch_stream(7, 3).standard_normal(4)
    c = batch_stream(7, 4).standard_normal(4)
    d = batch_stream(7, 3, tag=1).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


@pytest.mark.parametrize("threads", [1, 4, 8])
def test_run_batches_thread_invariant(threads):
    ref = run_batches(_fn, 1000, DEFAULT_SEED, 64, 1)
    out = run_batches(_fn, 1000, DEFAULT_SEED, 64, threads)
    assert out.shape == (1000,)
    assert out.tobytes() == ref.tobytes()


def test_run_batches_rejects_empty():
    with pytest.raises(ValueError):
        run_batches(_fn, 0, 1, 64)


def test_resolve_threads_env(monkeypatch):
    monkeypatch.setenv("DOZZLAB_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(5) == 5


def test_estimate_from_values():
    v = np.arange(10.0)
    est = estimate_from_values(v, 1)
    assert est.value == 4.5
    assert est.stderr == pytest.approx(np.std(v, ddof=1) / np.sqrt(10))
    assert est.diagnostics["ess"] == 10


def test_ratio_estimate_exact_ratio():
    den = np.array([1.0, 2.0, 3.0])
    est = ratio_estimate(2 * den, den, 0)
    assert est.value == pytest.approx(2.0)
    assert est.stderr == pytest.approx(0.0, abs=1e-15)
    assert 1 <= est.diagnostics["ess"] <= 3


def test_scaled():
    est = MCEstimate(2.0, 0.5, 10, 1, {"x": 1.0}).scaled(-3.0)
    assert (est.value, est.stderr) == (-6.0, 1.5)
    assert est.as_dict()["diagnostics"] == {"x": 1.0}
