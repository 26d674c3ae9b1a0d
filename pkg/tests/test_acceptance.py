"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  The Monte Carlo criteria
take several minutes each on one core.
"""
import itertools
import math
import time

import numpy as np
import pytest
import scipy.special as sc
import scipy.stats as st

from dozzlab import bpz, cylinder, kpz, sphere
from dozzlab.errors import DozzLabError
from dozzlab.rng import DEFAULT_SEED, batch_stream
from dozzlab.special import dozz_c, l_ratio, make_params, reflection_dozz, upsilon, upsilon_prime_zero

SEED = DEFAULT_SEED
P1 = make_params(1.0, 1.0)
# gamma^2 = 1.21 is not a ratio of small integers, so both periods are generic
P11 = make_params(1.1, 0.7)
THREADS = (1, 4, 8)


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail, runtime, limit):
        within = runtime <= limit
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n{tag} {status}: {detail}; runtime {runtime:.1f}s (limit {limit:.0f}s)")
        assert ok, detail
        assert within, f"runtime {runtime:.1f}s exceeds {limit}s"

    return emit


def _rand_z(rng, q):
    return complex(rng.uniform(0.05, q - 0.05), rng.uniform(-0.5, 0.5))


def _admissible_points(rng, q, n, check):
    """Draw alpha triples until n of them give finite residuals."""
    out = []
    for _ in range(20 * n):
        a = tuple(float(x) for x in rng.uniform(0.3 * q, 0.9 * q, size=3))
        try:
            out.append(check(a))
        except DozzLabError:
            continue
        if len(out) == n:
            return np.array(out)
    raise AssertionError(f"only {len(out)} admissible points found")


def test_c01_upsilon_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    half = max(abs(upsilon((g / 2 + 2 / g) / 2, g) - 1) for g in (0.5, 0.9, 1.1, 1.5, 1.9))
    refl = dual = s1 = s2 = 0.0
    for g in (0.8, 1.1, 1.6):
        q = g / 2 + 2 / g
        for _ in range(50):
            z = _rand_z(rng, q)
            u = upsilon(z, g)
            refl = max(refl, abs(upsilon(q - z, g) / u - 1))
            dual = max(dual, abs(upsilon(z, 4 / g) / u - 1))
            f1 = complex(l_ratio(g * z / 2)) * (g / 2) ** (1 - g * z)
            s1 = max(s1, abs(upsilon(z + g / 2, g) / (f1 * u) - 1))
            f2 = complex(l_ratio(2 * z / g)) * (g / 2) ** (4 * z / g - 1)
            s2 = max(s2, abs(upsilon(z + 2 / g, g) / (f2 * u) - 1))
    h = 1e-5
    deriv = max(
        abs(upsilon_prime_zero(g) / ((upsilon(h, g) - upsilon(-h, g)) / (2 * h)) - 1) for g in (0.8, 1.1, 1.6)
    )
    ok = half <= 1e-10 and refl <= 1e-9 and dual <= 1e-9 and s1 <= 1e-8 and s2 <= 1e-8 and deriv <= 1e-6
    detail = (
        f"Q/2 err {half:.1e}, reflection {refl:.1e}, duality {dual:.1e}, "
        f"shifts {s1:.1e}/{s2:.1e}, derivative {deriv:.1e}"
    )
    report("C1 upsilon", ok, detail, time.perf_counter() - t0, 30)


def _literal_shift(p, a):
    # C(a1 + gamma)/C(a1) from Gamma functions alone, independent of the library
    g, q, mu = p.gamma, p.q, p.mu
    a1, a2, a3 = a
    ab = a1 + a2 + a3

    def l(x):
        return sc.gamma(x) / sc.gamma(1 - x)

    num = l(g * a1 / 2) * l(g * a1 / 2 + g * g / 4) * l(g / 4 * (ab - 2 * a1 - g))
    den = l(g / 4 * (ab - 2 * q)) * l(g / 4 * (ab - 2 * a2)) * l(g / 4 * (ab - 2 * a3))
    pred = -l(-g * g / 4) / (math.pi * mu) * num / den
    return abs(dozz_c(p, a1 + g, a2, a3) / dozz_c(p, *a) / pred - 1)


def test_c02_dozz_identities(report):
    t0 = time.perf_counter()
    p, q = P11, P11.q
    rng = np.random.default_rng(2)

    def perm(a):
        c = dozz_c(p, *a)
        return max(abs(dozz_c(p, *b) / c - 1) for b in itertools.permutations(a))

    res = {
        "permutation": _admissible_points(rng, q, 20, perm).max(),
        "duality": _admissible_points(rng, q, 20, lambda a: abs(dozz_c(p.dual(), *a) / dozz_c(p, *a) - 1)).max(),
        "shift": _admissible_points(rng, q, 20, lambda a: _literal_shift(p, a)).max(),
    }
    for kind in bpz.SHIFT_KINDS:
        res[kind] = _admissible_points(rng, q, 20, lambda a, k=kind: bpz.shift_residuals(p, a, k)).max()
    res["periodicity"] = max(
        bpz.periodicity_check(p, (float(b), 1.2, 1.3), 4, seed=i)
        for i, b in enumerate(rng.uniform(0.4 * q, 0.8 * q, size=5))
    )
    tol = {"permutation": 1e-12, "periodicity": 1e-7}
    ok = all(v <= tol.get(k, 1e-8) for k, v in res.items())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in res.items())
    report("C2 dozz identities", ok, detail, time.perf_counter() - t0, 60)


def test_c03_two_point_limit(report):
    t0 = time.perf_counter()
    worst = 0.0
    eps = np.array([1e-2, 1e-3, 1e-4])
    for a in (1.6, 1.7):
        vals = np.array([e * dozz_c(P1, a, e, a) for e in eps])
        limit = np.polyfit(eps, vals, 2)[-1]
        worst = max(worst, abs(limit / (4 * reflection_dozz(P1, a)) - 1))
    report("C3 two-point limit", worst <= 1e-4, f"max rel err {worst:.1e}", time.perf_counter() - t0, 10)


def test_c04_headline_three_point(report):
    t0 = time.perf_counter()
    a = (1.8, 1.8, 1.8)
    exact = dozz_c(P1, *a)
    coarse = sphere.structure_constant_estimate(P1, *a, 20000, SEED, resolution=34)
    fine = sphere.structure_constant_estimate(P1, *a, 20000, SEED, resolution=48)
    tol = max(3 * fine.stderr, 0.1 * abs(exact))
    agree = abs(fine.value - exact) <= tol
    shrinks = abs(fine.value - exact) < abs(coarse.value - exact)
    detail = (
        f"C_mc {fine.value:.5f} +- {fine.stderr:.5f} on {fine.diagnostics['n_cells']:.0f} cells vs DOZZ {exact:.5f}; "
        f"bias {abs(coarse.value - exact):.4f} -> {abs(fine.value - exact):.4f} "
        f"({coarse.diagnostics['n_cells']:.0f} -> {fine.diagnostics['n_cells']:.0f} cells)"
    )
    report("C4 headline", agree and shrinks, detail, time.perf_counter() - t0, 600)


def test_c05_tail_slopes(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for alpha in (1.6, 1.7, 1.8):
        expected = -2 * (P1.q - alpha) / P1.gamma
        fit = cylinder.tail_fit(cylinder.i_alpha_samples(P1, alpha, 200000, SEED), expected)
        rel = abs(fit.slope / expected - 1)
        ok &= rel <= 0.10
        parts.append(f"alpha {alpha}: {fit.slope:.3f} vs {expected:.3f} ({100 * rel:.1f}%)")
    report("C5 tail slopes", ok, "; ".join(parts), time.perf_counter() - t0, 600)


def test_c06_reflection(report):
    t0 = time.perf_counter()
    rbar = cylinder.rbar_estimate(P1, 1.7, 10000, SEED)
    full = cylinder.full_reflection(P1, 1.7, rbar)
    exact = reflection_dozz(P1, 1.7)
    ok = abs(full.value - exact) <= max(3 * full.stderr, 0.15 * abs(exact))
    detail = f"R_mc {full.value:.3f} +- {full.stderr:.3f} vs R_DOZZ {exact:.3f}"
    report("C6 reflection", ok, detail, time.perf_counter() - t0, 600)


def _girsanov_pairs(ens, n_samples, threads, n_pairs=5):
    rng = np.random.default_rng(SEED)
    out = []
    for k in range(n_pairs):
        f = np.zeros(ens.n_cells)
        f[rng.choice(ens.n_cells, 4, replace=False)] = rng.uniform(0.2, 1.0, 4)
        j = int(rng.integers(ens.n_cells))
        lam = 0.1 * rng.standard_normal(ens.n_cells)

        def obs(x, j=j, lam=lam):
            return np.cos(x[j]) + np.tanh(lam @ x)

        out.append(sphere.girsanov_residual(ens, f, obs, 1.0, n_samples, SEED + k, threads))
    return out


def _gmc_masses(ens, n_batches):
    tot = []
    for b in range(n_batches):
        x = sphere.sample_field(ens, batch_stream(SEED, b), 1000)
        tot.append(sphere.gmc_weights(x, ens, 1.0).weights.sum(axis=0))
    return np.concatenate(tot)


def test_c07_exact_laws(report):
    t0 = time.perf_counter()
    nu = 0.8
    draws = cylinder.sample_max(nu, np.random.default_rng(SEED), 100000)
    ks = st.kstest(draws, "expon", args=(0, 1 / (2 * nu)))
    ens = sphere.build_ensemble(16)
    tot = _gmc_masses(ens, 20)
    se = np.std(tot, ddof=1) / math.sqrt(tot.size)
    mass_z = abs(tot.mean() - ens.areas.sum()) / se
    small = sphere.build_ensemble(12)
    zs = [abs(r["lhs"] - r["rhs"]) / r["stderr"] for r in _girsanov_pairs(small, 20000, None)]
    ok = ks.pvalue > 0.01 and mass_z <= 3 and max(zs) <= 3 and small.n_cells <= 256
    detail = (
        f"KS p {ks.pvalue:.3f}; mean mass {tot.mean():.4f} vs {ens.areas.sum():.4f} ({mass_z:.2f} se); "
        f"Girsanov max {max(zs):.2f} se on {small.n_cells} cells"
    )
    report("C7 exact laws", ok, detail, time.perf_counter() - t0, 120)


def test_c08_dotsenko_fateev(report):
    t0 = time.perf_counter()
    out = sphere.df_check(P1, 1.5, 1.5)
    ok = out["a3"] == pytest.approx(1.0) and out["rel_err"] <= 1e-4
    detail = f"quadrature {out['quadrature']:.10f} vs closed form {out['closed_form']:.10f}, rel {out['rel_err']:.1e}"
    report("C8 Dotsenko-Fateev", ok, detail, time.perf_counter() - t0, 60)


def test_c09_four_point(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for z in (0.2, 0.3 + 0.1j):
        spec = bpz.four_point_spec(P1, -0.5, (1.9, 1.9, 1.9), z)
        mc = bpz.t_mc(P1, spec, 20000, SEED, resolution=48)
        exact = bpz.t_bpz(P1, spec)
        dev = abs(mc.value - exact) / mc.stderr
        ok &= dev <= 3
        parts.append(f"z={z}: {mc.value:.5f} +- {mc.stderr:.5f} vs {exact:.5f} ({dev:.2f} se)")
    report("C9 four-point", ok, "; ".join(parts), time.perf_counter() - t0, 900)


def _mobius_constant(z3, n, res, threads=None):
    a = (1.8, 1.8, 1.8)
    zs = (0, 1, z3)
    est = sphere.correlation_estimate(
        P1, [sphere.Insertion(x, z) for x, z in zip(a, zs)], n, SEED, resolution=res, threads=threads
    )
    f = sphere.mobius_prefactor(P1, a, zs)
    return est.value / f, est.stderr / abs(f)


def test_c10_mobius(report):
    t0 = time.perf_counter()
    vals = {z3: _mobius_constant(z3, 10000, 32) for z3 in (2, 5, 10)}
    worst = max(
        abs(vals[u][0] - vals[v][0]) / math.hypot(vals[u][1], vals[v][1]) for u, v in itertools.combinations(vals, 2)
    )
    detail = ", ".join(f"z3={z}: {c:.5f} +- {s:.5f}" for z, (c, s) in vals.items()) + f"; max gap {worst:.2f} se"
    report("C10 Mobius", worst <= 3, detail, time.perf_counter() - t0, 600)


def test_c11_kpz(report):
    t0 = time.perf_counter()
    errs = []
    for g in (0.5, 1.0, 4 / math.sqrt(6), 1.9):
        p = make_params(g, 1.0)
        errs.append(abs(kpz.solve_kpz(p, 0.0).alpha - g))
        for d in np.linspace(1 - p.q**2 / 4 + 1e-3, 0.99, 7):
            sol = kpz.solve_kpz(p, d)
            errs.append(abs(sol.delta_alpha + sol.delta_sigma - 1))
        errs.append(abs(kpz.gamma_from_central_charge(kpz.central_charge_matter(g)) - g))
    c0 = abs(kpz.gamma_from_central_charge(0.0) - 4 / math.sqrt(6))
    exact = kpz.solve_kpz(P1, 0.0).alpha == 1.0
    ok = exact and c0 <= 1e-12 and max(errs) <= 1e-12
    detail = f"alpha(0) exact {exact}; c_m=0 err {c0:.1e}; round trips {max(errs):.1e}"
    report("C11 KPZ", ok, detail, time.perf_counter() - t0, 1)


def _reduced_runs(threads):
    """Every Monte Carlo pipeline above at reduced size; returns raw bytes."""
    a = (1.8, 1.8, 1.8)
    out = []
    est = sphere.structure_constant_estimate(P1, *a, 512, SEED, resolution=16, threads=threads)
    out.append(np.array([est.value, est.stderr]))
    out.append(cylinder.i_alpha_samples(P1, 1.7, 2048, SEED, threads))
    rbar = cylinder.rbar_estimate(P1, 1.7, 512, SEED, threads)
    out.append(np.array([rbar.value, rbar.stderr]))
    for r in _girsanov_pairs(sphere.build_ensemble(12), 1024, threads, n_pairs=2):
        out.append(np.array([r["lhs"], r["rhs"], r["stderr"]]))
    spec = bpz.four_point_spec(P1, -0.5, (1.9, 1.9, 1.9), 0.3 + 0.1j)
    mc = bpz.t_mc(P1, spec, 512, SEED, resolution=16, threads=threads)
    out.append(np.array([mc.value, mc.stderr]))
    out.append(np.array(_mobius_constant(5, 512, 16, threads)))
    return b"".join(x.tobytes() for x in out)


def test_c12_determinism(report):
    t0 = time.perf_counter()
    runs = {t: _reduced_runs(t) for t in THREADS}
    # single-stream samplers do not depend on the thread count by construction
    same_max = cylinder.sample_max(0.8, np.random.default_rng(SEED), 1000).tobytes() == cylinder.sample_max(
        0.8, np.random.default_rng(SEED), 1000
    ).tobytes()
    ok = len(set(runs.values())) == 1 and same_max
    detail = f"{len(runs[1])} bytes of estimates identical across threads {THREADS}: {ok}"
    report("C12 determinism", ok, detail, time.perf_counter() - t0, 600)
