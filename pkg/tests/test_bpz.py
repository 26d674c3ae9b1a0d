import cmath

import numpy as np
import pytest

from dozzlab import bpz
from dozzlab.errors import DomainExceeded, IntegerDegeneracy, PoleEncountered
from dozzlab.special import dozz_c, make_params

# mpmath hyp2f1 at 20 digits
HYP_ORACLE = [
    ((0.3, -1.2, 0.65, 0.6 + 0.3j), 0.67941016944193155513 - 0.14643050178439109832j),
    ((1.1, 0.4, 1.7, -0.5), 0.89716219001498764829),
]


@pytest.mark.parametrize("args, expected", HYP_ORACLE)
def test_hyp2f1_matches_mpmath(args, expected):
    assert abs(bpz.hyp2f1(*args) - expected) <= 1e-14 * abs(expected)


def test_hyp2f1_symmetric_and_domain():
    assert bpz.hyp2f1(0.3, 0.9, 1.4, 0.5) == pytest.approx(bpz.hyp2f1(0.9, 0.3, 1.4, 0.5), rel=1e-15)
    assert bpz.hyp2f1(0.3, 0.9, 1.4, 0) == 1
    with pytest.raises(DomainExceeded):
        bpz.hyp2f1(0.3, 0.9, 1.4, 0.8)


def test_coefficients_example():
    p = make_params(1.0, 1.0)
    co = bpz.bpz_coefficients(p, -0.5, (1.8, 1.9, 1.9))
    assert co.c == pytest.approx(0.65, abs=1e-14)


def test_c_relation_random():
    rng = np.random.default_rng(0)
    for g in (0.8, 1.0, 1.3):
        p = make_params(g, 1.0)
        for a1 in rng.uniform(0.5, p.q - 0.1, size=10):
            a, b, c = bpz._abc(p.q, -g / 2, (a1, 1.9, 1.9))
            assert 2 * (1 - c) == pytest.approx(g * (p.q - a1), abs=1e-13)


def test_bad_alpha0():
    with pytest.raises(IntegerDegeneracy):
        bpz.bpz_coefficients(make_params(1.0, 1.0), -0.3, (1.8, 1.9, 1.9))


def test_t_bpz_small_z_limit():
    p = make_params(1.0, 1.0)
    a = (1.9, 1.9, 1.9)
    lam = dozz_c(p, a[0] - 0.5, a[1], a[2])
    co = bpz.bpz_coefficients(p, -0.5, a)
    rate = min(2 * (1 - co.c), 2.0)
    devs = []
    zs = [1e-2, 1e-3, 1e-4]
    for z in zs:
        devs.append(abs(bpz.t_bpz(p, bpz.four_point_spec(p, -0.5, a, z)) - lam))
    slopes = np.diff(np.log(devs)) / np.diff(np.log(zs))
    assert slopes[-1] == pytest.approx(rate, abs=0.02)


def test_t_bpz_real_and_conjugate():
    p = make_params(1.0, 1.0)
    a = (1.9, 1.9, 1.9)
    t1 = bpz.t_bpz(p, bpz.four_point_spec(p, -0.5, a, 0.3 + 0.1j))
    t2 = bpz.t_bpz(p, bpz.four_point_spec(p, -0.5, a, 0.3 - 0.1j))
    assert isinstance(t1, float)
    assert t1 == pytest.approx(t2, rel=1e-13)


@pytest.mark.parametrize("kind", bpz.SHIFT_KINDS)
def test_shift_residuals_example(kind):
    p = make_params(1.1, 1.0)
    assert bpz.shift_residuals(p, (1.8, 1.7, 1.9), kind) <= 1e-8


@pytest.mark.parametrize("kind", ["gamma-shift", "dual-shift", "crossing", "reflection-gamma", "reflection-dual"])
def test_shift_residuals_at_gamma_one(kind):
    # the dual cosmological constant is infinite here; the identities must still close
    p = make_params(1.0, 1.0)
    assert bpz.shift_residuals(p, (2.3, 1.7, 1.9), kind) <= 1e-8


def test_periodicity():
    p = make_params(1.1, 1.0)
    assert bpz.periodicity_check(p, (1.6, 1.7, 1.9), 5) <= 1e-7
    assert bpz.periodicity_check(p, (1.6, 1.7, 1.9), 0) == 0.0
    with pytest.raises(PoleEncountered):
        bpz.periodicity_check(make_params(1.0, 1.0), (1.6, 1.7, 1.9), 3)


def test_four_point_spec_rejects_coincident():
    with pytest.raises(DomainExceeded):
        bpz.four_point_spec(make_params(1.0, 1.0), -0.5, (1.9, 1.9, 1.9), 0)
