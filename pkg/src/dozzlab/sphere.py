"""Monte Carlo correlation functions of Liouville theory on the Riemann sphere.

The sphere is covered by log-polar charts: the unit disk around 0, its
inversion image around infinity and a disk around every insertion with a
positive weight.  Each chart is cut into cells that are squares of side
h = 2 pi / resolution in (log r, theta); the innermost disk of each chart is
kept as a single core cell whose chaos is sampled exactly through the radial
decomposition of the field (module cylinder).

The Gaussian field is represented by its circle averages, one per cell, with
radius equal to half the cell diameter.  Off-diagonal covariances are the
exact double circle averages of the kernel

    K(x, y) = ln 1/|x - y| + ln|x|_+ + ln|y|_+,

which reduce to K itself for disjoint circles.  Integrands are averaged over
each cell with a tensor Gauss-Legendre rule rather than sampled at the centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy import special as sp
from scipy.linalg import blas, lapack
from scipy.spatial import cKDTree

from . import kernels
from .cylinder import build_cylinder, default_horizon, sample_i_alpha
from .errors import (
    FactorizationFailure,
    GammaOutOfRange,
    GammaPole,
    InadmissibleWeights,
    InsertionMismatch,
    NonIntegrable,
    TooManyCells,
)
from .rng import MCEstimate, batch_stream, estimate_from_values, ratio_estimate, run_batches
from .special import LiouvilleParams, l_ratio

__all__ = [
    "Insertion",
    "SphereEnsemble",
    "GmcMeasure",
    "Admissibility",
    "build_ensemble",
    "covariance_matrix",
    "factorization_residual",
    "sample_field",
    "gmc_weights",
    "cell_integrals",
    "rho_n_point",
    "admissibility",
    "correlation_rho_estimate",
    "correlation_estimate",
    "structure_constant_estimate",
    "mobius_prefactor",
    "girsanov_residual",
    "df_check",
    "liouville_measure_expectation",
]

RESOLUTION = 48
MAX_CELLS = 16384
SUB = 6
FINE = 4
SITE_FRACTION = 0.3
BATCH = 128
JITTER_LEVELS = (0.0, 1e-14, 1e-12, 1e-10)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(SUB)
_GL_U, _GL_WU = 0.5 * (_GL_X + 1.0), 0.5 * _GL_W


@dataclass(frozen=True)
class Insertion:
    alpha: float
    z: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "z", complex(self.z))


@dataclass(frozen=True)
class CoreCell:
    """Disk |x - center| < radius (or |x| > radius when center is None)."""

    center: complex | None
    radius: float
    index: int


@dataclass(eq=False)
class SphereEnsemble:
    resolution: int
    r_core: float
    sites: tuple
    points: np.ndarray
    areas: np.ndarray
    eps: np.ndarray
    diag_var: np.ndarray
    cov_factor: np.ndarray
    node_x: np.ndarray
    node_w: np.ndarray
    node_cell: np.ndarray
    cores: tuple
    jitter: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_cells(self) -> int:
        return self.points.size

    @property
    def n_regular(self) -> int:
        return self.points.size - len(self.cores)


@dataclass
class GmcMeasure:
    weights: np.ndarray


@dataclass(frozen=True)
class Admissibility:
    s: float
    extended_ok: bool
    seiberg_ok: bool
    moment_bound: float

    def as_dict(self) -> dict:
        return {"s": self.s, "extended_ok": self.extended_ok, "seiberg_ok": self.seiberg_ok, "moment_bound": self.moment_bound}


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


def _metric(x: np.ndarray) -> np.ndarray:
    """g(x) = |x|_+^{-4}."""
    r = np.maximum(np.abs(x), 1.0)
    return r**-4.0


def _refinement_sites(insertions: Sequence[Insertion]) -> tuple:
    """Finite nonzero locations that need their own chart, sorted."""
    zs = {ins.z for ins in insertions if ins.alpha > 0 and ins.z != 0}
    return tuple(sorted(zs, key=lambda z: (z.real, z.imag)))


def _site_radii(sites: tuple) -> list[float]:
    radii = []
    for k, z in enumerate(sites):
        d = abs(z)
        for j, w in enumerate(sites):
            if j != k:
                d = min(d, abs(z - w))
        radii.append(SITE_FRACTION * d)
    return radii


def _ring_edges(r_in: float, r_out: float, h: float) -> np.ndarray:
    k = max(1, math.ceil(math.log(r_out / r_in) / h - 1e-9))
    return np.exp(np.linspace(math.log(r_in), math.log(r_out), k + 1))


def _polar_nodes(center, la, lb, ta, tb, n_split=1):
    """Gauss-Legendre nodes of a (log r, theta) rectangle, optionally split."""
    ls = np.linspace(la, lb, n_split + 1)
    ts = np.linspace(ta, tb, n_split + 1)
    dl, dt = (lb - la) / n_split, (tb - ta) / n_split
    lu = (ls[:-1, None] + dl * _GL_U[None, :]).ravel()
    tu = (ts[:-1, None] + dt * _GL_U[None, :]).ravel()
    wl = np.tile(dl * _GL_WU, n_split)
    wt = np.tile(dt * _GL_WU, n_split)
    L, T = np.meshgrid(lu, tu, indexing="ij")
    W = np.outer(wl, wt)
    r = np.exp(L)
    x = center + r * np.exp(1j * T)
    return x.ravel(), (W * r * r).ravel()


def _cell_outline(center, la, lb, ta, tb, m=5):
    ls = np.linspace(la, lb, m)
    ts = np.linspace(ta, tb, m)
    pts = [np.exp(ls) * np.exp(1j * ta), np.exp(ls) * np.exp(1j * tb), np.exp(la) * np.exp(1j * ts), np.exp(lb) * np.exp(1j * ts)]
    return center + np.concatenate(pts)


class _Builder:
    def __init__(self, n_theta: int, holes):
        self.n_theta = n_theta
        self.holes = holes  # list of (center, radius)
        self.points, self.areas, self.eps = [], [], []
        self.nx, self.nw, self.nc = [], [], []

    def _masked(self, x):
        keep = np.ones(x.shape, dtype=bool)
        for c, rad in self.holes:
            keep &= np.abs(x - c) >= rad
        return keep

    def _status(self, outline, centre):
        """0: clear of all holes, 1: inside one, 2: clipped."""
        rad = np.max(np.abs(outline - centre)) * 1.01
        for c, hr in self.holes:
            d = abs(centre - c)
            if d + rad <= hr:
                return 1
            if d - rad < hr:
                return 2
        return 0

    def add_chart(self, center: complex, edges: np.ndarray, use_holes: bool):
        h_t = 2 * math.pi / self.n_theta
        logs = np.log(edges)
        for j in range(edges.size - 1):
            la, lb = logs[j], logs[j + 1]
            for k in range(self.n_theta):
                ta, tb = k * h_t, (k + 1) * h_t
                status = 0
                if use_holes and self.holes:
                    mid = center + math.exp(0.5 * (la + lb)) * np.exp(0.5j * (ta + tb))
                    status = self._status(_cell_outline(center, la, lb, ta, tb), mid)
                if status == 1:
                    continue
                if status == 2:
                    x, wl = _polar_nodes(center, la, lb, ta, tb, FINE)
                    keep = self._masked(x)
                    if not np.any(keep):
                        continue
                    x, wl = x[keep], wl[keep]
                else:
                    x, wl = _polar_nodes(center, la, lb, ta, tb)
                self._add(x, wl, _cell_outline(center, la, lb, ta, tb), status == 2)

    def _add(self, x, wl, outline, clipped):
        centroid = complex(np.sum(wl * x) / np.sum(wl))
        ref = x if clipped else outline
        if clipped:
            ref = np.concatenate([x, outline[self._masked(outline)]])
        eps = float(np.max(np.abs(ref - centroid)))
        w = wl * _metric(x)
        idx = len(self.points)
        self.points.append(centroid)
        self.areas.append(float(np.sum(w)))
        self.eps.append(eps)
        self.nx.append(x)
        self.nw.append(w)
        self.nc.append(np.full(x.size, idx, dtype=np.int64))


def _core_mass(center: complex, radius: float) -> float:
    """g-mass of a small disk, by polar Gauss-Legendre quadrature."""
    xr, wr = np.polynomial.legendre.leggauss(12)
    r = 0.5 * radius * (xr + 1)
    wr = 0.5 * radius * wr
    th = 2 * math.pi * (np.arange(64) + 0.5) / 64
    x = center + r[:, None] * np.exp(1j * th)[None, :]
    return float(np.sum(_metric(x) * (r * wr)[:, None]) * 2 * math.pi / 64)


def _log_average_plus(x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Average of ln|a|_+ over the circle of radius eps around x."""
    return -kernels.circle_log_average(np.abs(x), eps, np.ones_like(eps))


def _fill_covariance(points, eps, pvec, out=None, block=256):
    n = points.size
    c = np.empty((n, n), order="F") if out is None else out
    with np.errstate(divide="ignore"):
        for j0 in range(0, n, block):
            j1 = min(n, j0 + block)
            d = np.abs(points[:, None] - points[None, j0:j1])
            blk = -np.log(d)
            blk += pvec[:, None]
            blk += pvec[None, j0:j1]
            c[:, j0:j1] = blk
    tree = cKDTree(np.column_stack([points.real, points.imag]))
    lists = tree.query_ball_point(np.column_stack([points.real, points.imag]), 2 * eps)
    ii = np.concatenate([np.full(len(l), i, dtype=np.int64) for i, l in enumerate(lists)])
    jj = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
    dd = np.abs(points[ii] - points[jj])
    near = (dd < eps[ii] + eps[jj]) & (ii != jj)
    ii, jj, dd = ii[near], jj[near], dd[near]
    vals = kernels.circle_log_average(dd, eps[ii], eps[jj]) + pvec[ii] + pvec[jj]
    c[ii, jj] = vals
    c[jj, ii] = vals
    diag = -np.log(eps) + 2 * pvec
    c[np.arange(n), np.arange(n)] = diag
    return c, diag


def build_ensemble(
    resolution: int = RESOLUTION,
    insertions: Sequence[Insertion] = (),
    r_core: float | None = None,
    max_cells: int = MAX_CELLS,
) -> SphereEnsemble:
    """Grid, circle-average covariance and its Cholesky factor.

    ``resolution`` is the number of angular cells per ring.  The core radius
    defaults to 2 / resolution^2; site charts scale it by their own radius.
    """
    n_theta = int(resolution)
    if n_theta < 4:
        raise ValueError("resolution must be at least 4")
    insertions = [ins if isinstance(ins, Insertion) else Insertion(*ins) for ins in insertions]
    locs = [ins.z for ins in insertions]
    if len(set(locs)) != len(locs):
        raise ValueError("insertion locations must be pairwise distinct")
    r_core = 2.0 / n_theta**2 if r_core is None else float(r_core)
    sites = _refinement_sites(insertions)
    radii = _site_radii(sites)
    h = 2 * math.pi / n_theta

    # size check before any heavy work
    base_rings = 2 * (_ring_edges(r_core, 1.0, h).size - 1)
    site_rings = sum(_ring_edges(r_core * R / SITE_FRACTION, R, h).size - 1 for R in radii)
    if (base_rings + site_rings) * n_theta > max_cells:
        raise TooManyCells(f"about {(base_rings + site_rings) * n_theta} cells exceed the cap {max_cells}")

    b = _Builder(n_theta, list(zip(sites, radii)))
    b.add_chart(0j, _ring_edges(r_core, 1.0, h), True)
    b.add_chart(0j, _ring_edges(1.0, 1.0 / r_core, h), True)
    site_cores = []
    for z, R in zip(sites, radii):
        rc = r_core * R / SITE_FRACTION
        b.add_chart(z, _ring_edges(rc, R, h), False)
        site_cores.append((z, rc))

    n_reg = len(b.points)
    cores = [CoreCell(0j, r_core, n_reg), CoreCell(None, 1.0 / r_core, n_reg + 1)]
    core_pts, core_eps, core_area = [0j, 0j], [r_core, 1.0 / r_core], [math.pi * r_core**2, math.pi * r_core**2]
    for i, (z, rc) in enumerate(site_cores):
        cores.append(CoreCell(z, rc, n_reg + 2 + i))
        core_pts.append(z)
        core_eps.append(rc)
        core_area.append(_core_mass(z, rc))
    n = n_reg + len(cores)
    if n > max_cells:
        raise TooManyCells(f"{n} cells exceed the cap {max_cells}")

    points = np.array(b.points + core_pts, dtype=complex)
    eps = np.array(b.eps + core_eps)
    areas = np.array(b.areas + core_area)
    node_x = np.concatenate(b.nx)
    node_w = np.concatenate(b.nw)
    node_cell = np.concatenate(b.nc)

    pvec = _log_average_plus(points, eps)
    trace = None
    factor = None
    used = 0.0
    for level in JITTER_LEVELS:
        c, diag = _fill_covariance(points, eps, pvec)
        if trace is None:
            trace = float(np.sum(diag))
        if level:
            c[np.arange(n), np.arange(n)] += level * trace
        factor, info = lapack.dpotrf(c, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            used = level * trace
            break
        factor = None
    if factor is None:
        raise FactorizationFailure("covariance not positive definite after maximal jitter")
    if not factor.flags.f_contiguous:
        factor = np.asfortranarray(factor)

    return SphereEnsemble(
        resolution=n_theta,
        r_core=r_core,
        sites=sites,
        points=points,
        areas=areas,
        eps=eps,
        diag_var=diag,
        cov_factor=factor,
        node_x=node_x,
        node_w=node_w,
        node_cell=node_cell,
        cores=tuple(cores),
        jitter=used,
    )


def covariance_matrix(ens: SphereEnsemble) -> np.ndarray:
    """Rebuild the (unjittered) covariance matrix of the ensemble."""
    pvec = _log_average_plus(ens.points, ens.eps)
    return _fill_covariance(ens.points, ens.eps, pvec)[0]


def factorization_residual(ens: SphereEnsemble) -> float:
    """Relative Frobenius error of L L^T against the covariance matrix."""
    c = covariance_matrix(ens)
    ll = ens.cov_factor @ ens.cov_factor.T
    return float(np.linalg.norm(ll - c) / np.linalg.norm(c))


_ENSEMBLE_CACHE: dict = {}


def _cached_ensemble(resolution, insertions, r_core) -> SphereEnsemble:
    sites = _refinement_sites(insertions)
    key = (int(resolution), r_core, sites)
    ens = _ENSEMBLE_CACHE.get(key)
    if ens is None:
        _ENSEMBLE_CACHE.clear()  # ensembles are large; keep one
        ens = build_ensemble(resolution, insertions, r_core)
        _ENSEMBLE_CACHE[key] = ens
    return ens


# --------------------------------------------------------------------------
# field and chaos
# --------------------------------------------------------------------------


def sample_field(ens: SphereEnsemble, stream: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Field samples, shape (n_cells,) or Fortran-ordered (n_cells, n)."""
    m = 1 if n is None else int(n)
    xi = stream.standard_normal((m, ens.n_cells)).T
    x = blas.dtrmm(1.0, ens.cov_factor, xi, lower=1, overwrite_b=1)
    return x[:, 0] if n is None else x


def gmc_weights(field: np.ndarray, ens: SphereEnsemble, gamma: float) -> GmcMeasure:
    if not 0 < gamma < 2:
        raise GammaOutOfRange(f"gamma={gamma} is outside (0, 2)")
    x = np.asarray(field, dtype=float)
    v = ens.diag_var if x.ndim == 1 else ens.diag_var[:, None]
    a = ens.areas if x.ndim == 1 else ens.areas[:, None]
    return GmcMeasure(np.exp(gamma * x - 0.5 * gamma * gamma * v) * a)


def _log_f(x: np.ndarray, gamma: float, alphas, zs, alpha_inf: float) -> np.ndarray:
    lp = np.log(np.maximum(np.abs(x), 1.0))
    out = gamma * (alpha_inf + sum(alphas)) * lp
    with np.errstate(divide="ignore", invalid="ignore"):
        for a, z in zip(alphas, zs):
            if a != 0:
                out = out - gamma * a * np.log(np.abs(x - z))
    return out


def _site_alpha(center, alphas, zs, alpha_inf) -> float:
    if center is None:
        return alpha_inf
    for a, z in zip(alphas, zs):
        if z == center:
            return a
    return 0.0


def cell_integrals(ens: SphereEnsemble, gamma: float, alphas, zs, alpha_inf: float = 0.0):
    """Integrals of F g over regular cells and the core prefactors.

    Returns (a, cores) where a has length n_cells with zeros on core cells and
    cores is a list of (cell index, alpha, G r^{2 - gamma alpha}) such that the
    core contribution to rho is e^{gamma X - gamma^2 V / 2} times that
    prefactor times an I(alpha) draw.
    """
    key = ("a", gamma, tuple(alphas), tuple(zs), alpha_inf)
    if key in ens._cache:
        return ens._cache[key]
    alphas = [float(a) for a in alphas]
    zs = [complex(z) for z in zs]
    for a, z in zip(alphas, zs):
        if a > 0 and z != 0 and z not in ens.sites:
            raise InsertionMismatch(f"ensemble has no refinement at {z}")
    for z in ens.sites:
        if not any(a > 0 and zz == z for a, zz in zip(alphas, zs)):
            raise InsertionMismatch(f"ensemble refined at {z}, which carries no insertion")
    vals = ens.node_w * np.exp(_log_f(ens.node_x, gamma, alphas, zs, alpha_inf))
    a = np.bincount(ens.node_cell, weights=vals, minlength=ens.n_cells)
    cores = []
    for core in ens.cores:
        alpha = _site_alpha(core.center, alphas, zs, alpha_inf)
        if core.center is None:
            g_k = 1.0  # chart y = 1/x: g and F combine to |y|^{-gamma alpha_inf}
            r = 1.0 / core.radius
        else:
            z = core.center
            g_k = float(_metric(np.array([z]))[0])
            others = [(aa, zz) for aa, zz in zip(alphas, zs) if zz != z]
            lg = gamma * (alpha_inf + sum(alphas)) * math.log(max(abs(z), 1.0))
            lg -= sum(gamma * aa * math.log(abs(z - zz)) for aa, zz in others if aa != 0)
            g_k *= math.exp(lg)
            r = core.radius
        cores.append((core.index, alpha, g_k * r ** (2 - gamma * alpha)))
    ens._cache[key] = (a, cores)
    return a, cores


def _i_mean(gamma: float, alpha: float) -> float:
    if gamma * alpha >= 2:
        return math.inf
    return 2 * math.pi / (2 - gamma * alpha)


def rho_n_point(
    measure: GmcMeasure,
    ens: SphereEnsemble,
    insertions: Sequence[Insertion],
    gamma: float,
    alpha_inf: float = 0.0,
    core_draws: dict | None = None,
):
    """rho = integral of F against the chaos, on the ensemble's cells.

    Core cells use their I(alpha) draws from ``core_draws`` (cell index to
    value) when given and the mean of I(alpha) otherwise.
    """
    insertions = [ins if isinstance(ins, Insertion) else Insertion(*ins) for ins in insertions]
    alphas = [ins.alpha for ins in insertions]
    zs = [ins.z for ins in insertions]
    a, cores = cell_integrals(ens, gamma, alphas, zs, alpha_inf)
    w = np.asarray(measure.weights, dtype=float)
    ratio = np.where(ens.areas > 0, a / ens.areas, 0.0)
    if w.ndim == 2:
        ratio = ratio[:, None]
    total = np.sum(w * ratio, axis=0)
    for idx, alpha, pref in cores:
        if core_draws is not None and idx in core_draws:
            i_val = core_draws[idx]
        else:
            i_val = _i_mean(gamma, alpha)
            if not math.isfinite(i_val):
                raise ValueError(f"I({alpha}) has infinite mean; pass a draw")
        total = total + w[idx] / ens.areas[idx] * pref * i_val
    return total


# --------------------------------------------------------------------------
# admissibility and estimators
# --------------------------------------------------------------------------


def admissibility(params: LiouvilleParams, alphas: Sequence[float]) -> Admissibility:
    g, q = params.gamma, params.q
    alphas = [float(a) for a in alphas]
    s = (sum(alphas) - 2 * q) / g
    below_q = all(a < q for a in alphas)
    bound = min([4 / g**2] + [2 / g * (q - a) for a in alphas])
    extended = below_q and (-s < bound) and len(alphas) > 0
    return Admissibility(s, bool(extended), bool(s > 0 and below_q), bound)


def _check_request(params: LiouvilleParams, weights) -> float:
    if params.closed_form_only or not 0 < params.gamma < 2:
        raise GammaOutOfRange(f"gamma={params.gamma} is outside (0, 2) for sampling")
    adm = admissibility(params, weights)
    if not adm.extended_ok:
        raise InadmissibleWeights(f"weights {tuple(weights)} violate the extended bounds (s={adm.s:.6g})")
    if adm.s <= 0 and abs(adm.s - round(adm.s)) < 1e-12:
        raise GammaPole(f"s={adm.s} is a pole of the Gamma function")
    return adm.s


def _core_samplers(params, cores):
    """Per core cell: a function (rng, n) -> I draws, or None for the mean."""
    g = params.gamma
    out = {}
    for idx, alpha, _ in cores:
        if alpha > g / 2:
            cyl = build_cylinder(default_horizon(params, alpha))
            out[idx] = (alpha, cyl)
    return out


def _rho_batch(params, ens, a, cores, samplers, rng, m):
    g = params.gamma
    x = sample_field(ens, rng, m)
    shift = 0.5 * g * g * ens.diag_var
    rho = kernels.exp_weighted_colsum(x, shift, a, g)
    for idx, alpha, pref in cores:
        if idx in samplers:
            al, cyl = samplers[idx]
            i_val = sample_i_alpha(params, al, rng, m, ens=cyl)
        else:
            i_val = _i_mean(g, alpha)
        rho += np.exp(g * x[idx] - shift[idx]) * pref * i_val
    return rho


def correlation_rho_estimate(
    params: LiouvilleParams,
    alphas: Sequence[float],
    zs: Sequence[complex],
    alpha_inf: float | None,
    n_samples: int,
    seed: int,
    resolution: int = RESOLUTION,
    r_core: float | None = None,
    threads: int | None = None,
    ensemble: SphereEnsemble | None = None,
    return_samples: bool = False,
):
    """Estimate 2 mu^{-s} gamma^{-1} Gamma(s) E[rho^{-s}].

    rho integrates F(x) = |x|_+^{gamma alpha_inf} prod (|x|_+/|x - z_k|)^{gamma alpha_k}
    against the chaos.  ``alpha_inf=None`` means no insertion at infinity.
    """
    alphas = [float(a) for a in alphas]
    zs = [complex(z) for z in zs]
    weights = alphas + ([] if alpha_inf is None else [float(alpha_inf)])
    s = _check_request(params, weights)
    a_inf = 0.0 if alpha_inf is None else float(alpha_inf)
    insertions = [Insertion(a, z) for a, z in zip(alphas, zs)]
    ens = ensemble if ensemble is not None else _cached_ensemble(resolution, insertions, r_core)
    a, cores = cell_integrals(ens, params.gamma, alphas, zs, a_inf)
    samplers = _core_samplers(params, cores)

    def fn(b, m, rng):
        return _rho_batch(params, ens, a, cores, samplers, rng, m)

    rho = run_batches(fn, n_samples, seed, BATCH, threads)
    pref = 2 * params.mu ** (-s) / params.gamma * math.gamma(s)
    est = estimate_from_values(rho ** (-s), seed, s=s, n_cells=float(ens.n_cells), mean_rho=float(np.mean(rho)))
    est = est.scaled(pref)
    if return_samples:
        return est, rho
    return est


def _pair_prefactor(alphas, zs) -> float:
    out = 1.0
    for i in range(len(alphas)):
        for j in range(i + 1, len(alphas)):
            out *= abs(zs[i] - zs[j]) ** (-alphas[i] * alphas[j])
    return out


def correlation_estimate(params: LiouvilleParams, insertions: Sequence[Insertion], n_samples: int, seed: int, **kw) -> MCEstimate:
    """N-point correlation of vertex operators at finite points."""
    insertions = [ins if isinstance(ins, Insertion) else Insertion(*ins) for ins in insertions]
    alphas = [ins.alpha for ins in insertions]
    zs = [ins.z for ins in insertions]
    est = correlation_rho_estimate(params, alphas, zs, None, n_samples, seed, **kw)
    return est.scaled(_pair_prefactor(alphas, zs))


def structure_constant_estimate(params: LiouvilleParams, a1: float, a2: float, a3: float, n_samples: int, seed: int, **kw) -> MCEstimate:
    """Structure constant with insertions at 0, 1 and infinity."""
    return correlation_rho_estimate(params, (a1, a2), (0j, 1 + 0j), a3, n_samples, seed, **kw)


def mobius_prefactor(params: LiouvilleParams, alphas: Sequence[float], zs: Sequence[complex]) -> float:
    """|z12|^{2 D12} |z23|^{2 D23} |z13|^{2 D13} for a three-point function."""
    q = params.q
    d = [a / 2 * (q - a / 2) for a in alphas]
    z1, z2, z3 = (complex(z) for z in zs)
    d12 = d[2] - d[0] - d[1]
    d23 = d[0] - d[1] - d[2]
    d13 = d[1] - d[0] - d[2]
    return abs(z1 - z2) ** (2 * d12) * abs(z2 - z3) ** (2 * d23) * abs(z1 - z3) ** (2 * d13)


# --------------------------------------------------------------------------
# exact checks
# --------------------------------------------------------------------------


def girsanov_residual(
    ens: SphereEnsemble,
    f: np.ndarray,
    observable: Callable[[np.ndarray], np.ndarray],
    gamma: float,
    n_samples: int,
    seed: int,
    threads: int | None = None,
) -> dict:
    """Both sides of E[(sum f_i M_i) F(X)] = sum f_i area_i E[F(X + gamma C_i)].

    ``observable`` maps a field batch of shape (n_cells, m) to m values.
    """
    if ens.n_cells > 256:
        raise ValueError("girsanov_residual expects an ensemble of at most 256 cells")
    f = np.asarray(f, dtype=float)
    cov = covariance_matrix(ens)
    support = np.flatnonzero(f)

    def lhs_fn(b, m, rng):
        x = sample_field(ens, rng, m)
        w = gmc_weights(x, ens, gamma).weights
        return (f @ w) * observable(x)

    def rhs_fn(b, m, rng):
        x = sample_field(ens, rng, m)
        out = np.zeros(m)
        for i in support:
            out += f[i] * ens.areas[i] * observable(x + gamma * cov[:, i : i + 1])
        return out

    lhs = run_batches(lhs_fn, n_samples, seed, BATCH, threads, tag=0)
    rhs = run_batches(rhs_fn, n_samples, seed, BATCH, threads, tag=1)
    le = estimate_from_values(lhs, seed)
    re = estimate_from_values(rhs, seed)
    joint = math.hypot(le.stderr, re.stderr)
    return {"lhs": le.value, "rhs": re.value, "lhs_stderr": le.stderr, "rhs_stderr": re.stderr, "stderr": joint}


def _df_integrand_polar(e_a: float, e_b: float, center: complex, other: complex):
    """Integrand in (u, theta) with r^{1 - e_a} dr = du/(2 - e_a) absorbed."""
    p = 2.0 - e_a

    def fn(theta, u):
        r = (p * u) ** (1.0 / p)
        x = center + r * complex(math.cos(theta), math.sin(theta))
        return abs(x - other) ** (-e_b)

    return fn, p


def df_check(params: LiouvilleParams, a1: float, a2: float, epsrel: float = 1e-10) -> dict:
    """Dotsenko-Fateev n = 1: 2D quadrature of |x|^{-g a1} |x-1|^{-g a2} vs closed form."""
    g = params.gamma
    a3 = 4 / g - a1 - a2
    e1, e2 = g * a1, g * a2
    if not (e1 < 2 and e2 < 2 and e1 + e2 > 2):
        raise NonIntegrable(f"integrand not integrable for gamma a1={e1}, gamma a2={e2}")
    opts = {"epsrel": epsrel, "epsabs": 0.0, "limit": 200}

    def near(ea, eb, center, other):
        fn, p = _df_integrand_polar(ea, eb, center, other)
        umax = 0.5**p / p
        val, _ = integrate.nquad(fn, [[0, 2 * math.pi], [0, umax]], opts=[opts, opts])
        return val

    part0 = near(e1, e2, 0j, 1 + 0j)
    part1 = near(e2, e1, 1 + 0j, 0j)

    def outer_integrand(theta, r):
        x = r * complex(math.cos(theta), math.sin(theta))
        return r * abs(x) ** (-e1) * abs(x - 1) ** (-e2)

    def theta_lim(r):
        if r >= 1.5:
            return [0.0, 2 * math.pi]
        c = min(1.0, max(-1.0, (r * r + 0.75) / (2 * r)))
        t = math.acos(c)
        return [t, 2 * math.pi - t]

    mid, _ = integrate.nquad(outer_integrand, [theta_lim, [0.5, 1.5]], opts=[opts, opts])

    def far_integrand(theta, t):
        # r = 1.5 / t maps (0, 1] onto [1.5, inf)
        r = 1.5 / t
        x = r * complex(math.cos(theta), math.sin(theta))
        return r * abs(x) ** (-e1) * abs(x - 1) ** (-e2) * 1.5 / (t * t)

    far, _ = integrate.nquad(far_integrand, [[0, 2 * math.pi], [0, 1]], opts=[opts, opts])
    quad = part0 + part1 + mid + far
    closed = math.pi / (float(l_ratio(e1 / 2)) * float(l_ratio(e2 / 2)) * float(l_ratio(g * a3 / 2)))

    # 1D cross-check: the angular integral is 2 pi 2F1(b, b; 1; r^2) inside the unit disk
    b = e2 / 2
    inner, _ = integrate.quad(lambda r: 2 * math.pi * r ** (1 - e1) * sp.hyp2f1(b, b, 1, r * r), 0, 1, limit=200)
    outer, _ = integrate.quad(
        lambda t: 2 * math.pi * t ** (e1 + e2 - 3) * sp.hyp2f1(b, b, 1, t * t), 0, 1, limit=200
    )
    return {"quadrature": quad, "closed_form": closed, "reduction": inner + outer, "a3": a3, "rel_err": abs(quad / closed - 1)}


def liouville_measure_expectation(
    params: LiouvilleParams,
    observable: Callable[[np.ndarray, SphereEnsemble], np.ndarray],
    n_samples: int,
    seed: int,
    resolution: int = RESOLUTION,
    r_core: float | None = None,
    threads: int | None = None,
) -> MCEstimate:
    """E[F(nu_L)] for the volume form with gamma insertions at 0, 1 and infinity.

    ``observable(masses, ens)`` receives per-cell masses of shape (n_cells, m)
    and returns m values.
    """
    g = params.gamma
    if params.closed_form_only or not 0 < g < 2:
        raise GammaOutOfRange(f"gamma={g} is outside (0, 2)")
    shape = (3 * g - 2 * params.q) / g
    adm = admissibility(params, (g, g, g))
    if shape <= 0 or not adm.extended_ok:
        raise InadmissibleWeights(f"Gamma shape (3 gamma - 2Q)/gamma = {shape:.4g} must be positive")
    alphas, zs = (g, g), (0j, 1 + 0j)
    insertions = [Insertion(a, z) for a, z in zip(alphas, zs)]
    ens = _cached_ensemble(resolution, insertions, r_core)
    a, cores = cell_integrals(ens, g, alphas, zs, g)
    samplers = _core_samplers(params, cores)
    shift = 0.5 * g * g * ens.diag_var

    def fn(b, m, rng):
        x = sample_field(ens, rng, m)
        e = np.exp(g * x - shift[:, None])
        masses = a[:, None] * e
        for idx, alpha, pref in cores:
            if idx in samplers:
                al, cyl = samplers[idx]
                i_val = sample_i_alpha(params, al, rng, m, ens=cyl)
            else:
                i_val = _i_mean(g, alpha)
            masses[idx] = e[idx] * pref * i_val
        rho = masses.sum(axis=0)
        xi = rng.gamma(shape, 1.0 / params.mu, size=m)
        nu = masses * (xi / rho)[None, :]
        w = rho ** (-shape)
        return np.column_stack([w * observable(nu, ens), w])

    out = run_batches(fn, n_samples, seed, BATCH, threads)
    return ratio_estimate(out[:, 0], out[:, 1], seed, shape=shape, n_cells=float(ens.n_cells))
