"""Closed-form side: the Gamma ratio l, Zamolodchikov's Upsilon, the DOZZ
three-point constant and the DOZZ reflection coefficient.

Upsilon is evaluated by quadrature of its integral representation inside a
core sub-interval of the strip 0 < Re z < Q and continued everywhere else
with the two shift relations.  All products are accumulated as complex
logarithms so that signs and overflow are handled in one place.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from numbers import Complex, Real

import numpy as np
from scipy import integrate, special as sp

from .errors import (
    NonPositiveGamma,
    NonPositiveMu,
    PoleAtNonpositiveInteger,
    PoleOfDozz,
    PoleOfReflection,
    QuadratureFailure,
    ShiftPoleFailure,
)

__all__ = [
    "LiouvilleParams",
    "make_params",
    "l_ratio",
    "log_l",
    "upsilon",
    "log_upsilon",
    "upsilon_prime_zero",
    "dozz_c",
    "log_dozz_c",
    "reflection_dozz",
    "on_zero_lattice",
]

ZERO_SNAP = 1e-10
_INT_TOL = 1e-12
_SMALL_T = 1e-4
_QUAD_TOL = 1e-13
_QUAD_FAIL = 1e-9


@dataclass(frozen=True)
class LiouvilleParams:
    """Coupling data shared by every module.

    ``kappa`` is the combination pi * mu * l(gamma^2 / 4) that enters every
    closed form.  It is stored explicitly because for the dual coupling it
    stays finite even where mu_dual itself is infinite (gamma^2 = 4/n).
    """

    gamma: float
    mu: float
    q: float
    mu_dual: float
    kappa: float
    closed_form_only: bool

    @property
    def dual_kappa(self) -> float:
        if not self.kappa > 0:
            return math.nan
        return _exp(4.0 / self.gamma**2 * math.log(self.kappa))

    def dual(self) -> "LiouvilleParams":
        """Parameters with gamma/2 <-> 2/gamma and mu <-> mu_dual."""
        g = 4.0 / self.gamma
        return LiouvilleParams(
            gamma=g,
            mu=self.mu_dual,
            q=self.q,
            mu_dual=self.mu,
            kappa=self.dual_kappa,
            closed_form_only=g >= 2.0,
        )

    def with_mu(self, mu: float) -> "LiouvilleParams":
        return make_params(self.gamma, mu)

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "mu": self.mu}


def make_params(gamma: float, mu: float) -> LiouvilleParams:
    gamma = float(gamma)
    mu = float(mu)
    if not gamma > 0 or not math.isfinite(gamma):
        raise NonPositiveGamma(f"gamma must be positive, got {gamma!r}")
    if not mu > 0 or not math.isfinite(mu):
        raise NonPositiveMu(f"mu must be positive, got {mu!r}")
    q = gamma / 2 + 2 / gamma
    kappa = math.pi * mu * l_ratio(gamma**2 / 4)
    # mu_dual = kappa^(4/gamma^2) / (pi l(4/gamma^2)), in logs: both factors
    # leave the double range for small gamma
    x = 4 / gamma**2
    if _is_pos_int(x):
        mu_dual = math.inf
    elif not kappa > 0:
        mu_dual = math.nan
    else:
        sign = sp.gammasgn(x) * sp.gammasgn(1 - x)
        log_l_dual = sp.gammaln(x) - sp.gammaln(1 - x)
        mu_dual = float(sign * _exp(x * math.log(kappa) - math.log(math.pi) - log_l_dual))
    return LiouvilleParams(
        gamma=gamma,
        mu=mu,
        q=q,
        mu_dual=mu_dual,
        kappa=kappa,
        closed_form_only=gamma >= 2.0,
    )


# --------------------------------------------------------------------------
# Gamma ratio
# --------------------------------------------------------------------------


def _is_nonpos_int(x: complex, tol: float = _INT_TOL) -> bool:
    x = complex(x)
    if abs(x.imag) > tol:
        return False
    r = round(x.real)
    return r <= 0 and abs(x.real - r) <= tol


def _is_pos_int(x: complex, tol: float = _INT_TOL) -> bool:
    x = complex(x)
    if abs(x.imag) > tol:
        return False
    r = round(x.real)
    return r >= 1 and abs(x.real - r) <= tol


def _exp(x: float) -> float:
    """exp that saturates to inf instead of raising OverflowError."""
    return math.exp(x) if x < 709.0 else math.inf


def l_ratio(x):
    """Gamma(x) / Gamma(1 - x) for real or complex ``x``."""
    if isinstance(x, Real) or (isinstance(x, np.ndarray) and x.ndim == 0 and np.isrealobj(x)):
        x = float(x)
        if _is_nonpos_int(x):
            raise PoleAtNonpositiveInteger(f"l({x}) has a pole")
        if _is_pos_int(x):
            return 0.0
        sign = sp.gammasgn(x) * sp.gammasgn(1 - x)
        return float(sign * _exp(sp.gammaln(x) - sp.gammaln(1 - x)))
    if isinstance(x, Complex):
        if _is_nonpos_int(x):
            raise PoleAtNonpositiveInteger(f"l({x}) has a pole")
        if _is_pos_int(x):
            return 0j
        return cmath.exp(log_l(x))
    raise TypeError(f"unsupported argument {x!r}")


def log_l(x) -> complex:
    """Complex logarithm of l(x) (branch irrelevant after exponentiation)."""
    x = complex(x)
    return complex(sp.loggamma(x) - sp.loggamma(1 - x))


def _gamma_ratio_neg(x: float) -> float:
    """Gamma(-x) / Gamma(x) for real x, finite away from the integers."""
    if x == 0:
        return -1.0
    sign = sp.gammasgn(-x) * sp.gammasgn(x)
    return float(sign * math.exp(sp.gammaln(-x) - sp.gammaln(x)))


# --------------------------------------------------------------------------
# Upsilon
# --------------------------------------------------------------------------


def _strip_integrand(t: float, a: complex, b: float, c: float) -> complex:
    # ratio sinh^2(a t/2) / (sinh(b t) sinh(c t)) in overflow-free form
    ap = a if a.real >= 0 else -a
    num = (-np.expm1(-ap * t)) ** 2
    den = np.expm1(-2 * b * t) * np.expm1(-2 * c * t)
    ratio = np.exp((ap - (b + c)) * t) * num / den
    return (a * a * math.exp(-t) - ratio) / t


def _small_t_integral(a: complex, b: float, c: float, t0: float) -> complex:
    # integrand = a^2 (-1 + k1 t) + O(t^2) near t = 0
    a2 = a * a
    k1 = 0.5 - a2 / 12 + (b * b + c * c) / 6
    return a2 * (-t0 + k1 * t0 * t0 / 2)


@lru_cache(maxsize=65536)
def _ln_upsilon_strip(zr: float, zi: float, gamma: float) -> complex:
    q = gamma / 2 + 2 / gamma
    a = complex(q / 2 - zr, -zi)
    b, c = gamma / 4, 1 / gamma
    head = _small_t_integral(a, b, c, _SMALL_T)
    total = head
    err = 0.0
    for part in (np.real, np.imag):
        if part is np.imag and a.imag == 0:
            continue
        f = lambda t: float(part(_strip_integrand(t, a, b, c)))  # noqa: E731
        v1, e1 = integrate.quad(f, _SMALL_T, 1.0, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)
        v2, e2 = integrate.quad(f, 1.0, np.inf, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=400)
        total += (v1 + v2) * (1 if part is np.real else 1j)
        err = max(err, e1 + e2)
    if not err < _QUAD_FAIL:
        raise QuadratureFailure(f"Upsilon quadrature error {err:.3g} at z={complex(zr, zi)}")
    return total


def on_zero_lattice(z: complex, gamma: float, tol: float = ZERO_SNAP) -> bool:
    """True when z sits on (-g/2 N - 2/g N) u (Q + g/2 N + 2/g N)."""
    z = complex(z)
    if abs(z.imag) > tol:
        return False
    q = gamma / 2 + 2 / gamma
    h1, h2 = gamma / 2, 2 / gamma
    for x in (-z.real, z.real - q):
        if x < -tol:
            continue
        for n in range(int(x / h2) + 2):
            rest = x - n * h2
            if rest < -tol:
                break
            m = round(rest / h1)
            if m >= 0 and abs(rest - m * h1) <= tol:
                return True
    return False


def _shift_log_factor(w: complex, h: str, gamma: float) -> tuple[complex, int]:
    """log of the factor f with Upsilon(w + step) = f(w) Upsilon(w).

    Returns (log f, flag) where flag is +1 for a pole of f, -1 for a zero
    of f and 0 otherwise.
    """
    if h == "half":
        arg = gamma * w / 2
        power = (1 - gamma * w) * math.log(gamma / 2)
    else:
        arg = 2 * w / gamma
        power = (4 * w / gamma - 1) * math.log(gamma / 2)
    if _is_nonpos_int(arg, 1e-11):
        return 0j, 1
    if _is_pos_int(arg, 1e-11):
        return 0j, -1
    return log_l(arg) + power, 0


def _continuation_path(x: float, gamma: float) -> tuple[list[str], int]:
    """Steps taking Re z into the core of the strip.

    Returns the list of step kinds ("half" for gamma/2, "dual" for 2/gamma)
    and the direction: +1 when z lies above the core and is reached by
    forward shifts from the core point, -1 when it lies below.  The larger
    step is used greedily; the core is wide enough that no step jumps over
    it.
    """
    q = gamma / 2 + 2 / gamma
    if gamma / 2 <= 2 / gamma:
        (small, n_small), (big, n_big) = (gamma / 2, "half"), (2 / gamma, "dual")
    else:
        (small, n_small), (big, n_big) = (2 / gamma, "dual"), (gamma / 2, "half")
    lo = 0.25 * small
    hi = q - lo
    steps: list[str] = []
    if x > hi:
        while x > hi:
            if x - big >= lo:
                x -= big
                steps.append(n_big)
            else:
                x -= small
                steps.append(n_small)
        return steps, +1
    while x < lo:
        if x + big <= hi:
            x += big
            steps.append(n_big)
        else:
            x += small
            steps.append(n_small)
    return steps, -1


def _step_size(kind: str, gamma: float) -> float:
    return gamma / 2 if kind == "half" else 2 / gamma


def log_upsilon(z, gamma: float) -> complex:
    """Complex log of Upsilon_{gamma/2}(z); -inf real part at the zeros."""
    gamma = float(gamma)
    if not gamma > 0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma!r}")
    z = complex(z)
    if on_zero_lattice(z, gamma):
        return complex(-math.inf, 0.0)
    steps, direction = _continuation_path(z.real, gamma)
    if not steps:
        return _ln_upsilon_strip(z.real, z.imag, gamma)
    if direction == +1:
        # z = z0 + sum(steps); walk forward from the core point
        z0 = z - sum(_step_size(s, gamma) for s in steps)
        acc = _ln_upsilon_strip(z0.real, z0.imag, gamma)
        w = z0
        for s in reversed(steps):
            lf, flag = _shift_log_factor(w, s, gamma)
            if flag == -1:
                return complex(-math.inf, 0.0)
            if flag == +1:
                raise ShiftPoleFailure(f"pole of l while continuing Upsilon to z={z}")
            acc += lf
            w += _step_size(s, gamma)
        return acc
    # z below the core: Upsilon(z) = Upsilon(z0) / prod f(w_j)
    acc = 0j
    w = z
    for s in steps:
        lf, flag = _shift_log_factor(w, s, gamma)
        if flag == +1:
            return complex(-math.inf, 0.0)
        if flag == -1:
            raise ShiftPoleFailure(f"zero of l while continuing Upsilon to z={z}")
        acc -= lf
        w += _step_size(s, gamma)
    return acc + _ln_upsilon_strip(w.real, w.imag, gamma)


def upsilon(z, gamma: float):
    """Zamolodchikov's Upsilon_{gamma/2}(z); real in, real out."""
    lv = log_upsilon(z, gamma)
    if lv.real == -math.inf:
        val = 0j
    else:
        val = cmath.exp(lv)
    if isinstance(z, Real):
        return float(val.real)
    return val


def upsilon_prime_zero(gamma: float) -> float:
    """Upsilon'(0), which equals Upsilon(gamma/2) by the first shift relation."""
    return float(upsilon(gamma / 2, gamma))


# --------------------------------------------------------------------------
# DOZZ
# --------------------------------------------------------------------------


def log_dozz_c(params: LiouvilleParams, a1: float, a2: float, a3: float) -> complex:
    g = params.gamma
    q = params.q
    a1, a2, a3 = sorted((float(a1), float(a2), float(a3)))
    abar = a1 + a2 + a3
    base = params.kappa * (g / 2) ** (2 - g * g / 2)
    lb = cmath.log(complex(base))
    num = [a1, a2, a3]
    den = [abar / 2 - q, abar / 2 - a1, abar / 2 - a2, abar / 2 - a3]
    out = (2 * q - abar) / g * lb + log_upsilon(g / 2, g)
    zero_num = False
    for a in num:
        lu = log_upsilon(a, g)
        if lu.real == -math.inf:
            zero_num = True
        else:
            out += lu
    zero_den = False
    for a in den:
        lu = log_upsilon(a, g)
        if lu.real == -math.inf:
            zero_den = True
        else:
            out -= lu
    if zero_den:
        if zero_num:
            raise PoleOfDozz("0/0 in the DOZZ formula; evaluate as a limit")
        raise PoleOfDozz(f"DOZZ pole at alphas=({a1}, {a2}, {a3})")
    if zero_num:
        return complex(-math.inf, 0.0)
    return out


def dozz_c(params: LiouvilleParams, a1: float, a2: float, a3: float) -> float:
    """DOZZ three-point structure constant for real weights."""
    lv = log_dozz_c(params, a1, a2, a3)
    if lv.real == -math.inf:
        return 0.0
    return float(cmath.exp(lv).real)


def reflection_dozz(params: LiouvilleParams, alpha: float) -> float:
    """DOZZ reflection coefficient R(alpha)."""
    g = params.gamma
    nu = params.q - alpha
    x1 = g * nu / 2
    x2 = 2 * nu / g
    for x in (x1, x2):
        if x != 0 and _is_pos_int(x, 1e-12):
            raise PoleOfReflection(f"reflection coefficient diverges at alpha={alpha}")
    r1 = _gamma_ratio_neg(x1)
    r2 = _gamma_ratio_neg(x2)
    return float(-(params.kappa ** x2) * r1 * r2)
