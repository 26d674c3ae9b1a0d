"""Cylinder machinery: lateral noise, drifted and conditioned Brownian paths,
I(alpha) and rho(alpha) samplers, reflection coefficients, tail fits and the
quantum sphere sampler.

The lateral noise is represented through its angular Fourier modes.  Its
covariance is the series sum_n exp(-n|s-t|) cos(n(theta-theta'))/n, so every
mode coefficient is an Ornstein-Uhlenbeck process with rate n and variance
1/n, which is sampled exactly along the s grid.  Keeping modes n <= n_theta/2
regularises the field at the angular grid scale.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special as sp
from scipy import stats

from . import kernels
from .errors import (
    AlphaOutOfRange,
    FactorizationFailure,
    GammaOutOfRange,
    HorizonTooShort,
    PoleOfReflection,
    StepTooCoarse,
    VarianceWarning,
    WindowEmpty,
)
from .rng import MCEstimate, estimate_from_values, ratio_estimate, run_batches
from .special import LiouvilleParams

__all__ = [
    "CylinderEnsemble",
    "DriftedPath",
    "TailFit",
    "build_cylinder",
    "default_horizon",
    "sample_lateral",
    "lateral_field",
    "sample_drifted_path",
    "sample_conditioned_bm",
    "sample_max",
    "sample_i_alpha",
    "i_alpha_samples",
    "sample_rho_alpha",
    "i_alpha_mean",
    "rbar_estimate",
    "full_reflection",
    "tail_fit",
    "survival_curve",
    "quantum_sphere_expectation",
    "williams_gluing",
]

N_THETA = 64
DS = 0.05
BATCH = 128


@dataclass(frozen=True)
class CylinderEnsemble:
    """Discretised lateral-noise field on rows s_grid x theta_grid."""

    s_grid: np.ndarray
    theta_grid: np.ndarray
    ds: float
    modes: int
    basis: np.ndarray
    decay: np.ndarray
    innov: np.ndarray
    init_sd: np.ndarray
    var: float
    cell_eps: float

    @property
    def rows(self) -> int:
        return self.s_grid.size

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.theta_grid.size

    def covariance(self, s, theta, t, theta2):
        """Covariance of the regularised field (truncated mode series)."""
        n = np.arange(1, self.modes + 1)
        ds = np.abs(np.asarray(s, dtype=float) - np.asarray(t, dtype=float))[..., None]
        dth = (np.asarray(theta, dtype=float) - np.asarray(theta2, dtype=float))[..., None]
        return np.sum(np.exp(-n * ds) * np.cos(n * dth) / n, axis=-1)

    @staticmethod
    def kernel(s, theta, t, theta2):
        """Exact lateral covariance ln((e^-s v e^-t)/|e^-s e^i theta - e^-t e^i theta2|)."""
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        num = np.maximum(np.exp(-s), np.exp(-t))
        den = np.abs(np.exp(-s + 1j * np.asarray(theta)) - np.exp(-t + 1j * np.asarray(theta2)))
        return np.log(num / den)

    def trapezoid(self) -> np.ndarray:
        w = np.full(self.rows, self.ds)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def build_cylinder(horizon: float, two_sided: bool = False, n_theta: int = N_THETA, ds: float = DS) -> CylinderEnsemble:
    if n_theta < 4 or n_theta % 2:
        raise FactorizationFailure("n_theta must be an even number >= 4")
    if not ds > 0 or ds >= horizon:
        raise StepTooCoarse(f"step {ds} must be positive and below the horizon {horizon}")
    k = int(math.ceil(horizon / ds - 1e-9))
    s = ds * np.arange(k + 1)
    if two_sided:
        s = np.concatenate([-s[:0:-1], s])
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    modes = n_theta // 2
    n = np.arange(1, modes + 1, dtype=float)
    basis = np.vstack([np.cos(np.outer(n, theta)), np.sin(np.outer(n, theta))])
    decay = np.tile(np.exp(-n * ds), 2)
    innov = np.tile(np.sqrt(-np.expm1(-2 * n * ds) / n), 2)
    init_sd = np.tile(1 / np.sqrt(n), 2)
    dtheta = 2 * math.pi / n_theta
    return CylinderEnsemble(
        s_grid=s,
        theta_grid=theta,
        ds=ds,
        modes=modes,
        basis=basis,
        decay=decay,
        innov=innov,
        init_sd=init_sd,
        var=float(np.sum(1 / n)),
        cell_eps=0.5 * math.hypot(ds, dtheta),
    )


def default_horizon(params: LiouvilleParams, alpha: float) -> float:
    nu = params.q - alpha
    return max(10.0, 12.0 / (params.gamma * nu))


def _check_gamma(params: LiouvilleParams) -> None:
    if params.closed_form_only or not 0 < params.gamma < 2:
        raise GammaOutOfRange(f"gamma={params.gamma} is outside (0, 2)")


def _check_alpha(params: LiouvilleParams, alpha: float) -> float:
    _check_gamma(params)
    if not params.gamma / 2 < alpha < params.q:
        raise AlphaOutOfRange(f"alpha={alpha} outside ({params.gamma / 2}, {params.q})")
    return params.q - alpha


# --------------------------------------------------------------------------
# lateral noise
# --------------------------------------------------------------------------


def _normals(ens: CylinderEnsemble, rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal((n, ens.rows, 2 * ens.modes))


def sample_lateral(ens: CylinderEnsemble, rng: np.random.Generator, gamma: float, n: int = 1) -> np.ndarray:
    """Row masses Z_s = sum_theta exp(gamma Y - gamma^2/2 Var) dtheta, shape (n, rows)."""
    xi = _normals(ens, rng, n)
    return kernels.lateral_mass(xi, ens.decay, ens.innov, ens.init_sd, ens.basis, gamma, ens.var, ens.dtheta)


def lateral_field(ens: CylinderEnsemble, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """The field Y itself on the grid, shape (n, rows, n_theta)."""
    xi = _normals(ens, rng, n)
    coef = np.empty_like(xi)
    coef[:, 0] = ens.init_sd * xi[:, 0]
    for r in range(1, ens.rows):
        coef[:, r] = ens.decay * coef[:, r - 1] + ens.innov * xi[:, r]
    return coef @ ens.basis


# --------------------------------------------------------------------------
# radial paths
# --------------------------------------------------------------------------


@dataclass
class DriftedPath:
    times: np.ndarray
    values: np.ndarray
    nu: float
    conditioned: bool


def _grid(horizon: float, step: float) -> np.ndarray:
    if not step > 0 or step >= horizon:
        raise StepTooCoarse(f"step {step} must be positive and below the horizon {horizon}")
    k = int(math.ceil(horizon / step - 1e-9))
    return step * np.arange(k + 1)


def _drifted(nu: float, times: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    dt = np.diff(times)
    inc = rng.standard_normal((n, dt.size)) * np.sqrt(dt) - nu * dt
    out = np.zeros((n, times.size))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def _conditioned(nu: float, times: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    # minus the norm of a 3d Brownian motion with drift of length nu
    dt = np.diff(times)
    inc = rng.standard_normal((n, dt.size, 3)) * np.sqrt(dt)[None, :, None]
    inc[:, :, 0] += nu * dt
    w = np.zeros((n, times.size, 3))
    np.cumsum(inc, axis=1, out=w[:, 1:])
    return -np.sqrt(np.einsum("ijk,ijk->ij", w, w))


def sample_drifted_path(nu: float, horizon: float, step: float, rng: np.random.Generator, n: int = 1) -> DriftedPath:
    """Unconditioned B_s - nu s started at 0."""
    times = _grid(horizon, step)
    return DriftedPath(times, _drifted(nu, times, rng, n), float(nu), False)


def sample_conditioned_bm(nu: float, horizon: float, step: float, rng: np.random.Generator, n: int = 1) -> DriftedPath:
    """Brownian motion with drift -nu conditioned to stay negative, from 0.

    The conditioned process is the negated radial part of a three-dimensional
    Brownian motion with drift of length nu, whose generator has the h-transform
    drift nu coth(nu r).  Sampling that representation is exact on the grid.
    """
    if not nu > 0:
        raise AlphaOutOfRange(f"drift must be positive, got {nu}")
    times = _grid(horizon, step)
    return DriftedPath(times, _conditioned(nu, times, rng, n), float(nu), True)


def sample_max(nu: float, rng: np.random.Generator, size=None):
    """Exact draw of M = sup_s (B_s - nu s), an Exp(2 nu) variable."""
    if not nu > 0:
        raise AlphaOutOfRange(f"drift must be positive, got {nu}")
    u = 1.0 - rng.random(size)
    return -np.log(u) / (2 * nu)


# --------------------------------------------------------------------------
# I(alpha) and rho(alpha)
# --------------------------------------------------------------------------


def i_alpha_mean(params: LiouvilleParams, alpha: float) -> float:
    """E[I(alpha)] = 2 pi / (2 - gamma alpha), infinite for alpha >= 2/gamma."""
    x = 2 - params.gamma * alpha
    return 2 * math.pi / x if x > 0 else math.inf


def _i_alpha_batch(params, alpha, ens, rng, n):
    g = params.gamma
    nu = params.q - alpha
    z = sample_lateral(ens, rng, g, n)
    path = _drifted(nu, ens.s_grid, rng, n)
    return (np.exp(g * path) * z) @ ens.trapezoid()


def sample_i_alpha(
    params: LiouvilleParams,
    alpha: float,
    rng: np.random.Generator,
    n: int = 1,
    horizon: float | None = None,
    ens: CylinderEnsemble | None = None,
) -> np.ndarray:
    """Draws of I(alpha) = int_0^S exp(gamma (B_s - (Q - alpha) s)) Z_s ds."""
    nu = _check_alpha(params, alpha)
    if ens is None:
        s = default_horizon(params, alpha) if horizon is None else float(horizon)
        if s < 10.0 / (params.gamma * nu) - 1e-12:
            raise HorizonTooShort(f"horizon {s} is below 10/(gamma nu) = {10 / (params.gamma * nu):.4g}")
        ens = build_cylinder(s)
    return _i_alpha_batch(params, alpha, ens, rng, n)


def i_alpha_samples(
    params: LiouvilleParams,
    alpha: float,
    n_samples: int,
    seed: int,
    threads: int | None = None,
    horizon: float | None = None,
) -> np.ndarray:
    """n_samples draws of I(alpha) over batch streams, in batch order."""
    _check_alpha(params, alpha)
    s = default_horizon(params, alpha) if horizon is None else float(horizon)
    ens = build_cylinder(s)
    return run_batches(lambda b, m, rng: sample_i_alpha(params, alpha, rng, m, ens=ens), n_samples, seed, BATCH, threads)


def i_alpha_truncation(params: LiouvilleParams, alpha: float, horizon: float) -> float:
    """Relative mean weight exp(-(gamma nu - gamma^2/2) S) of the discarded tail.

    Infinite when alpha >= 2/gamma, where the mean itself diverges.
    """
    g = params.gamma
    rate = g * (params.q - alpha) - g * g / 2
    return math.exp(-rate * horizon) if rate > 0 else math.inf


def _rho_parts(params, alpha, ens, rng, n):
    """Two-sided path, lateral row masses and rho for a batch."""
    g = params.gamma
    nu = params.q - alpha
    z = sample_lateral(ens, rng, g, n)
    half = (ens.rows + 1) // 2
    times = ens.s_grid[half - 1 :]
    right = _conditioned(nu, times, rng, n)
    left = _conditioned(nu, times, rng, n)
    path = np.concatenate([left[:, :0:-1], right], axis=1)
    rows = np.exp(g * path) * z * ens.trapezoid()
    return path, rows, rows.sum(axis=1)


def sample_rho_alpha(
    params: LiouvilleParams,
    alpha: float,
    rng: np.random.Generator,
    n: int = 1,
    horizon: float | None = None,
    ens: CylinderEnsemble | None = None,
) -> np.ndarray:
    """Draws of rho(alpha) = int exp(gamma B^alpha_s) Z_s ds over the two-sided cylinder."""
    _check_alpha(params, alpha)
    if ens is None:
        ens = build_cylinder(default_horizon(params, alpha) if horizon is None else horizon, two_sided=True)
    return _rho_parts(params, alpha, ens, rng, n)[2]


def _rho_ensemble(params, alpha, horizon, n_theta, ds):
    s = default_horizon(params, alpha) if horizon is None else horizon
    return build_cylinder(s, two_sided=True, n_theta=n_theta, ds=ds)


def rbar_estimate(
    params: LiouvilleParams,
    alpha: float,
    n_samples: int,
    seed: int,
    threads: int | None = None,
    horizon: float | None = None,
    n_theta: int = N_THETA,
    ds: float = DS,
    return_samples: bool = False,
):
    """Unit volume reflection coefficient E[rho(alpha)^(2(Q - alpha)/gamma)]."""
    nu = _check_alpha(params, alpha)
    g = params.gamma
    p = 2 * nu / g
    if 2 * p >= 4 / g**2:
        warnings.warn(f"rho^{p:.3g} has infinite variance; the error bar is not reliable", VarianceWarning)
    ens = _rho_ensemble(params, alpha, horizon, n_theta, ds)
    rho = run_batches(lambda b, m, rng: _rho_parts(params, alpha, ens, rng, m)[2], n_samples, seed, BATCH, threads)
    est = estimate_from_values(rho**p, seed, exponent=p, finite_variance=float(2 * p < 4 / g**2))
    return (est, rho) if return_samples else est


def _reflection_prefactor(params: LiouvilleParams, alpha: float) -> float:
    p = 2 * (params.q - alpha) / params.gamma
    if p <= 0 or abs(p - round(p)) < 1e-12:
        raise PoleOfReflection(f"Gamma(-{p}) diverges at alpha={alpha}")
    return params.mu**p * sp.gamma(-p) * p


def full_reflection(params: LiouvilleParams, alpha: float, rbar):
    """R(alpha) = mu^p Gamma(-p) p Rbar(alpha) with p = 2(Q - alpha)/gamma."""
    f = _reflection_prefactor(params, alpha)
    if isinstance(rbar, MCEstimate):
        return rbar.scaled(f)
    return f * float(rbar)


# --------------------------------------------------------------------------
# tail fits
# --------------------------------------------------------------------------


@dataclass
class TailFit:
    slope: float
    slope_err: float
    window: tuple
    n_exceed: np.ndarray
    thresholds: np.ndarray
    n: int
    hill_slope: float = math.nan
    expected: float | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "slope_err": self.slope_err,
            "window": list(self.window),
            "n": self.n,
            "hill_slope": self.hill_slope,
            "expected": self.expected,
        }


def _ls_slope(log_t: np.ndarray, counts: np.ndarray, n: int) -> float:
    return float(np.polyfit(log_t, np.log(counts / n), 1)[0])


def tail_fit(
    samples,
    expected_slope_hint: float | None = None,
    n_thresholds: int = 20,
    n_boot: int = 200,
    min_exceed: int = 100,
    seed: int = 0,
) -> TailFit:
    """Least-squares slope of log P(X > t) against log t.

    The window runs between the thresholds exceeded by n/10 and by
    ``min_exceed`` samples; the error is the bootstrap standard deviation.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    k_hi = n // 10
    if k_hi <= min_exceed:
        raise WindowEmpty(f"{n} samples cannot give exceedance counts in [{min_exceed}, n/10]")
    t_lo = x[n - 1 - k_hi]
    t_hi = x[n - 1 - min_exceed]
    if not (t_lo > 0 and t_hi > t_lo):
        raise WindowEmpty("degenerate samples: the tail window is empty")
    thresholds = np.geomspace(t_lo, t_hi, n_thresholds)
    log_t = np.log(thresholds)

    def counts_of(sorted_x):
        return sorted_x.size - np.searchsorted(sorted_x, thresholds, side="right")

    counts = counts_of(x)
    if np.any(counts <= 0):
        raise WindowEmpty("no exceedances at the top of the window")
    slope = _ls_slope(log_t, counts, n)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for i in range(n_boot):
        xb = np.sort(x[rng.integers(0, n, n)])
        cb = np.maximum(counts_of(xb), 1)
        boots[i] = _ls_slope(log_t, cb, n)
    top = x[n - k_hi :]
    hill = -k_hi / float(np.sum(np.log(top / t_lo)))
    return TailFit(
        slope=slope,
        slope_err=float(np.std(boots, ddof=1)),
        window=(float(t_lo), float(t_hi)),
        n_exceed=counts,
        thresholds=thresholds,
        n=n,
        hill_slope=hill,
        expected=expected_slope_hint,
    )


def survival_curve(samples, n_points: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Empirical survival P(X > t) on log-spaced t, strictly decreasing."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    pos = x[x > 0]
    t = np.geomspace(pos[0], pos[-1], n_points)
    surv = (n - np.searchsorted(x, t, side="right")) / n
    keep = np.concatenate([[True], np.diff(surv) < 0])
    t, surv = t[keep], surv[keep]
    mask = surv > 0
    return t[mask], surv[mask]


# --------------------------------------------------------------------------
# quantum sphere
# --------------------------------------------------------------------------


def quantum_sphere_expectation(
    params: LiouvilleParams,
    alpha: float,
    observable: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_samples: int,
    seed: int,
    threads: int | None = None,
    horizon: float | None = None,
    n_theta: int = N_THETA,
    ds: float = DS,
) -> MCEstimate:
    """Expectation under the unit volume alpha-quantum sphere.

    ``observable(s_grid, w)`` receives the row masses w (shape (n, rows), each
    row summing to one) of the normalised measure and returns shape (n,).
    """
    nu = _check_alpha(params, alpha)
    g = params.gamma
    p = 2 * nu / g
    if 2 * p >= 4 / g**2:
        warnings.warn("infinite-variance reweighting", VarianceWarning)
    ens = _rho_ensemble(params, alpha, horizon, n_theta, ds)

    def batch(b, m, rng):
        _, rows, rho = _rho_parts(params, alpha, ens, rng, m)
        f = np.asarray(observable(ens.s_grid, rows / rho[:, None]), dtype=float)
        return np.stack([f * rho**p, rho**p], axis=1)

    out = run_batches(batch, n_samples, seed, BATCH, threads)
    return ratio_estimate(out[:, 0], out[:, 1], seed)


# --------------------------------------------------------------------------
# Williams decomposition harness
# --------------------------------------------------------------------------


def williams_gluing(params: LiouvilleParams, alpha: float, n_samples: int, seed: int, threads: int | None = None) -> dict:
    """Glue M, a reversed conditioned segment and a conditioned path into an
    unconditioned path, then compare its I functional with direct sampling.

    Returns the glued and direct samples, the pathwise sandwich bounds and a
    two-sample Kolmogorov-Smirnov test.
    """
    nu = _check_alpha(params, alpha)
    g = params.gamma
    s = default_horizon(params, alpha)
    ens2 = build_cylinder(s, two_sided=True)
    ens1 = build_cylinder(s)
    centre = (ens2.rows - 1) // 2

    def glued(b, m, rng):
        path, rows, _ = _rho_parts(params, alpha, ens2, rng, m)
        big_m = sample_max(nu, rng, m)
        left = path[:, centre::-1]  # left half read outwards from the centre
        above = left >= -big_m[:, None]
        last = ens2.s_grid.size - 1 - centre
        idx = np.where(above.any(axis=1), above.shape[1] - 1 - np.argmax(above[:, ::-1], axis=1), 0)
        idx = np.minimum(idx, last)
        f = rows / ens2.trapezoid()
        w = np.full(ens2.rows, ens2.ds)
        cum = np.cumsum((f * w)[:, ::-1], axis=1)[:, ::-1]  # sum over j >= k
        start = centre - idx
        total = cum[np.arange(m), start] - 0.5 * ens2.ds * (f[np.arange(m), start] + f[:, -1])
        lower = cum[:, centre] - 0.5 * ens2.ds * (f[:, centre] + f[:, -1])
        upper = cum[:, 0] - 0.5 * ens2.ds * (f[:, 0] + f[:, -1])
        e = np.exp(g * big_m)
        return np.stack([e * lower, e * total, e * upper], axis=1)

    parts = run_batches(glued, n_samples, seed, BATCH, threads, tag=1)
    direct = run_batches(lambda b, m, rng: _i_alpha_batch(params, alpha, ens1, rng, m), n_samples, seed, BATCH, threads, tag=2)
    lower, total, upper = parts[:, 0], parts[:, 1], parts[:, 2]
    ks = stats.ks_2samp(total, direct)
    return {
        "glued": total,
        "direct": direct,
        "lower": lower,
        "upper": upper,
        "sandwich_ok": bool(np.all(lower <= total * (1 + 1e-12)) and np.all(total <= upper * (1 + 1e-12))),
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
    }
