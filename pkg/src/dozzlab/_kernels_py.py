"""Pure numpy implementations of the hot kernels.

These mirror the compiled versions in ``_kernels.pyx`` argument for argument
and are used when the extension is unavailable or disabled.
"""
from __future__ import annotations

import numpy as np


def graded_nodes(n_gl: int = 8, panels: int = 6, ratio: float = 0.2):
    """Nodes v in (0, 1] and weights for integrals over v = (pi - theta)/span.

    Panels shrink geometrically towards v = 0, where the integrand of the
    partial-arc average can be nearly log-singular; the innermost panel also
    uses v = t u^2 to absorb an exact log singularity.
    """
    x, w = np.polynomial.legendre.leggauss(n_gl)
    u, wu = 0.5 * (x + 1.0), 0.5 * w
    nodes, weights = [], []
    hi = 1.0
    for _ in range(panels - 1):
        lo = hi * ratio
        nodes.append(lo + (hi - lo) * u)
        weights.append((hi - lo) * wu)
        hi = lo
    nodes.append(hi * u * u)
    weights.append(hi * 2 * u * wu)
    return np.concatenate(nodes), np.concatenate(weights)


_V, _WV = graded_nodes()


def lateral_mass(xi, decay, innov, init_sd, basis, gamma, var, dtheta):
    """Row masses Z[b, r] of the lateral chaos for a batch of samples.

    xi has shape (n, rows, m) with m = 2 * modes; the mode coefficients follow
    exact Ornstein-Uhlenbeck transitions along the rows and the field on the
    angular grid is coef @ basis.
    """
    xi = np.asarray(xi, dtype=float)
    n, rows, m = xi.shape
    coef = np.empty_like(xi)
    coef[:, 0, :] = init_sd * xi[:, 0, :]
    for r in range(1, rows):
        np.multiply(decay, coef[:, r - 1, :], out=coef[:, r, :])
        coef[:, r, :] += innov * xi[:, r, :]
    y = coef @ basis
    y *= gamma
    y -= 0.5 * gamma * gamma * var
    np.exp(y, out=y)
    return dtheta * y.sum(axis=2)


def exp_weighted_colsum(x, shift, a, gamma):
    """out[b] = sum_i a[i] * exp(gamma * x[i, b] - shift[i])."""
    x = np.asarray(x, dtype=float)
    e = gamma * x
    e -= shift[:, None]
    np.exp(e, out=e)
    return a @ e


def circle_log_average(d, r1, r2):
    """Average over a on the circle (x1, r1) of -ln max(|a - x2|, r2).

    Equivalently the double circle average of -ln|a - b| over the circles
    (x1, r1) and (x2, r2) with |x1 - x2| = d.  Vectorised over the inputs.
    """
    d, r1, r2 = np.broadcast_arrays(
        np.asarray(d, dtype=float), np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
    )
    out = np.empty(d.shape)
    far = d >= r1 + r2
    in1 = (~far) & (d + r1 <= r2)
    in2 = (~far) & (~in1) & (d + r2 <= r1)
    part = ~(far | in1 | in2)
    out[far] = -np.log(d[far])
    out[in1] = -np.log(r2[in1])
    out[in2] = -np.log(r1[in2])
    if np.any(part):
        dp, p1, p2 = d[part], r1[part], r2[part]
        c = (p2 * p2 - dp * dp - p1 * p1) / (2 * dp * p1)
        th0 = np.arccos(np.clip(c, -1.0, 1.0))
        span = np.pi - th0
        th = np.pi - span[:, None] * _V[None, :]
        dist2 = dp[:, None] ** 2 + p1[:, None] ** 2 + 2 * dp[:, None] * p1[:, None] * np.cos(th)
        f = -np.log(p2)[:, None] + 0.5 * np.log(np.maximum(dist2, 1e-300))
        integral = span * (f @ _WV)
        out[part] = -np.log(np.maximum(dp, p1)) + integral / np.pi
    return out
