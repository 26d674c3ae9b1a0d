"""Closed-form solvers for the central charge relation and the KPZ equation."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import CentralChargeTooLarge, NoRealSolution
from .special import LiouvilleParams

__all__ = [
    "KpzSolution",
    "gamma_from_central_charge",
    "central_charge_matter",
    "conformal_weight",
    "alpha_from_weight",
    "solve_kpz",
]


@dataclass(frozen=True)
class KpzSolution:
    gamma: float
    alpha: float
    delta_sigma: float
    c_matter: float
    delta_alpha: float


def gamma_from_central_charge(c_m: float) -> float:
    """Unique gamma in (0, 2] with 1 + 6 Q^2 + c_m = 26."""
    c_m = float(c_m)
    if c_m > 1:
        raise CentralChargeTooLarge(f"matter central charge must be <= 1, got {c_m}")
    return (math.sqrt(25 - c_m) - math.sqrt(1 - c_m)) / math.sqrt(6)


def central_charge_matter(gamma: float) -> float:
    q = gamma / 2 + 2 / gamma
    return 26 - (1 + 6 * q * q)


def conformal_weight(params: LiouvilleParams, alpha: float) -> float:
    return alpha / 2 * (params.q - alpha / 2)


def alpha_from_weight(params: LiouvilleParams, delta_sigma: float) -> float:
    """Root alpha <= Q of Delta_sigma + Delta_alpha = 1."""
    q = params.q
    disc = q * q - 4 * (1 - delta_sigma)
    if disc < 0:
        if disc > -1e-14 * q * q:
            disc = 0.0
        else:
            raise NoRealSolution(f"Delta_sigma={delta_sigma} is below 1 - Q^2/4")
    return q - math.sqrt(disc)


def solve_kpz(params: LiouvilleParams, delta_sigma: float) -> KpzSolution:
    alpha = alpha_from_weight(params, delta_sigma)
    return KpzSolution(
        gamma=params.gamma,
        alpha=alpha,
        delta_sigma=float(delta_sigma),
        c_matter=central_charge_matter(params.gamma),
        delta_alpha=conformal_weight(params, alpha),
    )
