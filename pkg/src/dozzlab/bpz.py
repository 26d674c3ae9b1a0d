"""Degenerate four-point layer: hypergeometric solutions of the BPZ equation,
the crossing coefficient A, the B coefficients and residuals of the shift
identities satisfied by the closed-form structure constant.

The prefactors mu / l(-x) that appear in the shift identities are rewritten
through kappa = pi * mu * l(gamma^2/4) and 1/l(-x) = -x^2 l(x).  This keeps
them finite for couplings where the dual cosmological constant is infinite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .errors import (
    DegenerateC,
    DomainExceeded,
    IntegerDegeneracy,
    PoleEncountered,
    PoleOfDozz,
    PoleOfReflection,
    ShiftPoleFailure,
    PoleAtNonpositiveInteger,
)
from .special import LiouvilleParams, dozz_c, l_ratio, reflection_dozz

__all__ = [
    "BpzCoefficients",
    "FourPointSpec",
    "hyp2f1",
    "bpz_coefficients",
    "four_point_spec",
    "t_bpz",
    "t_mc",
    "b_coefficient",
    "b_dual_coefficient",
    "shift_residuals",
    "periodicity_check",
    "SHIFT_KINDS",
]

HYP_RADIUS = 0.7
HYP_TOL = 1e-16
_MAX_TERMS = 5000
_INT_TOL = 1e-10

SHIFT_KINDS = ("gamma-shift", "dual-shift", "reflection-gamma", "reflection-dual", "crossing")


def hyp2f1(a: float, b: float, c: float, z) -> complex:
    """Gauss series 2F1(a, b; c; z) on the disk |z| <= 0.7."""
    z = complex(z)
    if c <= 0 and abs(c - round(c)) < _INT_TOL:
        raise DegenerateC(f"c={c} is a nonpositive integer")
    if abs(z) > HYP_RADIUS + 1e-15:
        raise DomainExceeded(f"|z|={abs(z):.3g} exceeds {HYP_RADIUS}")
    total = 1.0 + 0j
    term = 1.0 + 0j
    az = abs(z)
    for n in range(_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1)) * z
        total += term
        if term == 0:
            break
        # once the term ratio is below |z|-ish the tail is geometric
        ratio = abs((a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2))) * az
        if ratio < 1 and abs(term) * ratio / (1 - ratio) < HYP_TOL * max(1.0, abs(total)):
            break
    else:
        raise DomainExceeded("hypergeometric series did not converge")
    return total


@dataclass(frozen=True)
class BpzCoefficients:
    a: float
    b: float
    c: float
    a_gamma: float
    alpha0: float
    alphas: tuple


@dataclass(frozen=True)
class FourPointSpec:
    alpha0: float
    alphas: tuple
    z: complex
    s: float


def four_point_spec(params: LiouvilleParams, alpha0: float, alphas, z) -> FourPointSpec:
    alphas = tuple(float(a) for a in alphas)
    z = complex(z)
    if z in (0j, 1 + 0j):
        raise DomainExceeded("cross ratio must differ from 0 and 1")
    s = (alpha0 + sum(alphas) - 2 * params.q) / params.gamma
    return FourPointSpec(float(alpha0), alphas, z, s)


def _abc(q: float, alpha0: float, alphas) -> tuple[float, float, float]:
    a1, a2, a3 = alphas
    a = alpha0 / 2 * (q - 2 * alpha0 - a1 - a2 - a3) - 0.5
    b = alpha0 / 2 * (q - a1 - a2 + a3) + 0.5
    c = 1 + alpha0 * (q - a1)
    return a, b, c


def _is_int(x: float) -> bool:
    return abs(x - round(x)) < _INT_TOL


def _crossing_a(a: float, b: float, c: float) -> float:
    num = [c, c, 1 - a, 1 - b, a - c + 1, b - c + 1]
    den = [2 - c, 2 - c, c - a, c - b, a, b]
    for x in num:
        if x <= 0 and _is_int(x):
            raise PoleEncountered(f"Gamma pole at {x} in the crossing coefficient")
    sign = -1.0
    log_abs = 0.0
    for x in num:
        sign *= sp.gammasgn(x)
        log_abs += sp.gammaln(x)
    for x in den:
        if x <= 0 and _is_int(x):
            return 0.0
        sign *= sp.gammasgn(x)
        log_abs -= sp.gammaln(x)
    return sign * math.exp(log_abs)


def bpz_coefficients(params: LiouvilleParams, alpha0: float, alphas) -> BpzCoefficients:
    g = params.gamma
    alpha0 = float(alpha0)
    if not (math.isclose(alpha0, -g / 2, rel_tol=1e-14) or math.isclose(alpha0, -2 / g, rel_tol=1e-14)):
        raise IntegerDegeneracy(f"alpha0 must be -gamma/2 or -2/gamma, got {alpha0}")
    alphas = tuple(float(a) for a in alphas)
    a, b, c = _abc(params.q, alpha0, alphas)
    if _is_int(c) or _is_int(c - a - b):
        raise IntegerDegeneracy(f"c={c} or c-a-b={c - a - b} is an integer")
    return BpzCoefficients(a, b, c, _crossing_a(a, b, c), alpha0, alphas)


def t_bpz(params: LiouvilleParams, spec: FourPointSpec) -> float:
    """Closed-form reduced four-point function lambda (|F-|^2 + A |F+|^2)."""
    co = bpz_coefficients(params, spec.alpha0, spec.alphas)
    a, b, c = co.a, co.b, co.c
    z = spec.z
    f_minus = hyp2f1(a, b, c, z)
    f_plus = hyp2f1(1 + a - c, 1 + b - c, 2 - c, z)
    # |z^(1-c)|^2 on the principal branch
    mod_plus = abs(z) ** (2 * (1 - c)) * abs(f_plus) ** 2
    lam = dozz_c(params, spec.alphas[0] + spec.alpha0, spec.alphas[1], spec.alphas[2])
    return float(lam * (abs(f_minus) ** 2 + co.a_gamma * mod_plus))


def t_mc(params: LiouvilleParams, spec: FourPointSpec, n_samples: int, seed: int, **kw):
    """Monte Carlo reduced four-point function at cross ratio z."""
    from .sphere import correlation_rho_estimate

    a1, a2, a3 = spec.alphas
    return correlation_rho_estimate(
        params,
        alphas=(spec.alpha0, a1, a2),
        zs=(spec.z, 0j, 1 + 0j),
        alpha_inf=a3,
        n_samples=n_samples,
        seed=seed,
        **kw,
    )


# --------------------------------------------------------------------------
# shift identities
# --------------------------------------------------------------------------


def _l(x: float) -> float:
    try:
        return float(l_ratio(x))
    except PoleAtNonpositiveInteger as exc:
        raise PoleEncountered(str(exc)) from exc


def b_coefficient(params: LiouvilleParams, alpha: float) -> float:
    """B(alpha) = -mu pi / (l(-g^2/4) l(g alpha/2) l(2 + g^2/4 - g alpha/2))."""
    x = params.gamma**2 / 4
    y = params.gamma * alpha / 2
    den = _l(y) * _l(2 + x - y)
    if den == 0:
        raise PoleEncountered(f"B coefficient diverges at alpha={alpha}")
    return params.kappa * x * x / den


def b_dual_coefficient(params: LiouvilleParams, alpha: float) -> float:
    """Dual B: gamma/2 <-> 2/gamma and mu <-> mu_dual."""
    x = 4 / params.gamma**2
    y = 2 * alpha / params.gamma
    den = _l(y) * _l(2 + x - y)
    if den == 0:
        raise PoleEncountered(f"dual B coefficient diverges at alpha={alpha}")
    return params.dual_kappa * x * x / den


def _c(params, a1, a2, a3) -> float:
    try:
        return dozz_c(params, a1, a2, a3)
    except (PoleOfDozz, ShiftPoleFailure) as exc:
        raise PoleEncountered(str(exc)) from exc


def _r(params, alpha) -> float:
    try:
        return reflection_dozz(params, alpha)
    except PoleOfReflection as exc:
        raise PoleEncountered(str(exc)) from exc


def _half_shift_ratio(kap: float, h: float, a1: float, a2: float, a3: float, q: float) -> float:
    """C(a1+h)/C(a1-h) predicted by the shift identity with step h.

    h = gamma/2 gives the gamma identity, h = 2/gamma the dual one once
    kappa is replaced by the dual kappa.
    """
    x = h * h
    ab = a1 + a2 + a3
    num = _l(h * a1) * _l(h * a1 - x) * _l(h / 2 * (ab - 2 * a1 - h))
    den = _l(h / 2 * (ab - h - 2 * q)) * _l(h / 2 * (ab - 2 * a3 - h)) * _l(h / 2 * (ab - 2 * a2 - h))
    if den == 0:
        raise PoleEncountered("vanishing denominator in shift identity")
    return num / (kap * x * x * den)


def _rel(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return abs(lhs)
    return abs(lhs / rhs - 1.0)


def shift_residuals(params: LiouvilleParams, alphas, which: str) -> float:
    """Relative residual |lhs/rhs - 1| of one closed-form identity."""
    g, q = params.gamma, params.q
    a1, a2, a3 = (float(a) for a in alphas)
    if which == "gamma-shift":
        h = g / 2
        lhs = _c(params, a1 + h, a2, a3) / _c(params, a1 - h, a2, a3)
        return _rel(lhs, _half_shift_ratio(params.kappa, h, a1, a2, a3, q))
    if which == "dual-shift":
        h = 2 / g
        lhs = _c(params, a1 + h, a2, a3) / _c(params, a1 - h, a2, a3)
        return _rel(lhs, _half_shift_ratio(params.dual_kappa, h, a1, a2, a3, q))
    if which == "reflection-gamma":
        lhs = _r(params, a1)
        return _rel(lhs, b_coefficient(params, a1) * _r(params, a1 + g / 2))
    if which == "reflection-dual":
        lhs = _r(params, a1)
        return _rel(lhs, b_dual_coefficient(params, a1) * _r(params, a1 + 2 / g))
    if which == "crossing":
        a, b, c = _abc(q, -g / 2, (a1, a2, a3))
        if _is_int(c) or _is_int(c - a - b):
            raise PoleEncountered(f"integer c={c} or c-a-b={c - a - b}")
        lhs = b_coefficient(params, a1) * _c(params, a1 + g / 2, a2, a3)
        return _rel(lhs, _crossing_a(a, b, c) * _c(params, a1 - g / 2, a2, a3))
    raise ValueError(f"unknown identity {which!r}; expected one of {SHIFT_KINDS}")


def gamma_sq_rational(gamma: float, max_den: int = 12, tol: float = 1e-9) -> bool:
    """True when gamma^2 is close to a rational with a small denominator."""
    g2 = gamma * gamma
    for d in range(1, max_den + 1):
        if abs(g2 * d - round(g2 * d)) < tol * d:
            return True
    return False


def periodicity_check(params: LiouvilleParams, alphas, n_points: int, seed: int = 0) -> float:
    """Max deviation from 1 of phi(alpha + gamma)/phi(alpha) and
    phi(alpha + 4/gamma)/phi(alpha), where phi is the ratio of the function
    generated by the two shift identities to the closed form.

    The shift identities are composed twice from alpha1 (one full period each)
    and compared with the closed form at the shifted point.  ``alphas`` fixes
    (alpha2, alpha3); alpha1 is drawn on n_points points from the admissible
    band around ``alphas[0]``.
    """
    if n_points <= 0:
        return 0.0
    if gamma_sq_rational(params.gamma):
        raise PoleEncountered(f"gamma^2={params.gamma**2} is rational; the periods are commensurate")
    g, q = params.gamma, params.q
    base, a2, a3 = (float(a) for a in alphas)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for a1 in base + rng.uniform(-0.1, 0.1, size=n_points):
        c0 = _c(params, a1, a2, a3)
        for h, kap in ((g / 2, params.kappa), (2 / g, params.dual_kappa)):
            # apply the step-h identity at a1 + h: C(a1 + 2h) = ratio * C(a1)
            pred = c0 * _half_shift_ratio(kap, h, a1 + h, a2, a3, q)
            worst = max(worst, _rel(_c(params, a1 + 2 * h, a2, a3), pred))
    return worst
