import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dozzlab.errors import NonPositiveGamma, NonPositiveMu, PoleAtNonpositiveInteger, PoleOfDozz
from dozzlab.special import (
    dozz_c,
    l_ratio,
    log_upsilon,
    make_params,
    on_zero_lattice,
    reflection_dozz,
    upsilon,
    upsilon_prime_zero,
)

# mpmath, 30 digits: strip integral for Upsilon, Gamma ratio for l
UPSILON_ORACLE = [
    (0.8, 1.0, 0.76882598146953090106),
    (0.3, 1.3, 0.31014626020747336664),
    (1.9, 0.7, 0.92247976575871193824),
]
UPSILON_COMPLEX_ORACLE = (0.7 + 0.4j, 1.2, 0.89887364537080654024 + 0.46443187295357973587j)
L_ORACLE = [(0.3, 2.3046544414912458105), (-1.7, 1.6274658862306654668), (2.4, 0.46710881921186098336)]
# DOZZ formula evaluated with the mpmath Upsilon above (gamma = 1, mu = 1)
DOZZ_ORACLE = [((1.8, 1.8, 1.8), 0.99802728466027777748), ((1.9, 1.7, 1.3), -30.907821280752415216)]


@pytest.mark.parametrize("z, g, expected", UPSILON_ORACLE)
def test_upsilon_matches_mpmath(z, g, expected):
    assert upsilon(z, g) == pytest.approx(expected, rel=1e-12)


def test_upsilon_complex_matches_mpmath():
    z, g, expected = UPSILON_COMPLEX_ORACLE
    assert abs(upsilon(z, g) - expected) <= 1e-12 * abs(expected)


@pytest.mark.parametrize("x, expected", L_ORACLE)
def test_l_ratio_matches_mpmath(x, expected):
    assert l_ratio(x) == pytest.approx(expected, rel=1e-13)


def test_l_ratio_pole():
    with pytest.raises(PoleAtNonpositiveInteger):
        l_ratio(-2.0)


def test_l_reciprocal_identity():
    for x in (0.13, 0.77, 1.4, -0.6):
        assert l_ratio(x) * l_ratio(1 - x) == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("g", [0.6, 1.0, 1.37, 1.9])
def test_upsilon_half_q_is_one(g):
    q = g / 2 + 2 / g
    assert abs(upsilon(q / 2, g) - 1) <= 1e-10


def test_upsilon_zeros():
    assert upsilon(0.0, 1.0) == 0.0
    assert on_zero_lattice(-0.5, 1.0)
    assert not on_zero_lattice(0.3, 1.1)


def test_upsilon_continuation_far_left_consistent():
    g = 1.1
    z = -1.37
    direct = upsilon(z, g)
    f = l_ratio(g * z / 2) * (g / 2) ** (1 - g * z)
    assert upsilon(z + g / 2, g) == pytest.approx(f * direct, rel=1e-9)


def test_log_upsilon_consistent():
    assert np.exp(log_upsilon(0.9, 1.2)).real == pytest.approx(upsilon(0.9, 1.2), rel=1e-13)


def test_upsilon_prime_zero_finite_difference():
    g = 1.3
    h = 1e-5
    fd = (upsilon(h, g) - upsilon(-h, g)) / (2 * h)
    assert upsilon_prime_zero(g) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("alphas, expected", DOZZ_ORACLE)
def test_dozz_matches_mpmath(alphas, expected):
    assert dozz_c(make_params(1.0, 1.0), *alphas) == pytest.approx(expected, rel=1e-12)


def test_dozz_mu_scaling():
    p = make_params(1.0, 1.0)
    a = (1.8, 1.7, 1.6)
    s = (sum(a) - 2 * p.q) / p.gamma
    assert dozz_c(p.with_mu(2.0), *a) == pytest.approx(2.0 ** (-s) * dozz_c(p, *a), rel=1e-12)


def test_dozz_duality_at_irrational_gamma():
    p = make_params(1.1, 0.7)
    a = (1.3, 1.9, 2.1)
    assert dozz_c(p.dual(), *a) == pytest.approx(dozz_c(p, *a), rel=1e-9)


def test_dozz_zero_over_zero():
    with pytest.raises(PoleOfDozz):
        dozz_c(make_params(1.0, 1.0), 0.0, 1.0, 1.0)


def test_reflection_at_q_is_minus_one():
    p = make_params(1.0, 1.0)
    assert reflection_dozz(p, p.q) == pytest.approx(-1.0, abs=1e-12)


def test_reflection_unitarity():
    p = make_params(1.2, 0.8)
    for a in (0.7, 1.4, 2.0):
        assert reflection_dozz(p, a) * reflection_dozz(p, 2 * p.q - a) == pytest.approx(1.0, rel=1e-9)


def test_two_point_limit_richardson():
    p = make_params(1.0, 1.0)
    for a in (1.6, 1.7):
        eps = np.array([1e-2, 1e-3, 1e-4])
        vals = np.array([e * dozz_c(p, a, e, a) for e in eps])
        # the remainder is analytic in eps: fit a quadratic in eps and take eps = 0
        coef = np.polyfit(eps, vals, 2)
        assert coef[-1] == pytest.approx(4 * reflection_dozz(p, a), rel=1e-4)


def test_params_validation():
    with pytest.raises(NonPositiveGamma):
        make_params(0.0, 1.0)
    with pytest.raises(NonPositiveMu):
        make_params(1.0, -1.0)
    assert make_params(2.5, 1.0).closed_form_only
    p = make_params(1.0, 1.0)
    assert p.q == 2.5


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 1.9), st.floats(0.05, 0.95), st.floats(-0.5, 0.5))
def test_upsilon_symmetries_property(g, t, im):
    q = g / 2 + 2 / g
    z = complex(t * q, im)
    u = upsilon(z, g)
    assert abs(upsilon(q - z, g) / u - 1) <= 1e-9
    assert abs(upsilon(z, 4 / g) / u - 1) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-3.0, 3.0).filter(lambda x: min(abs(x - round(x)), 1) > 1e-3))
def test_l_reflection_property(x):
    assert l_ratio(x) * l_ratio(1 - x) == pytest.approx(1.0, rel=1e-11)
