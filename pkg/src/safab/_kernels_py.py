"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` extension; used
when the extension is not built or ``SAFAB_PURE_PYTHON`` is set.
"""
import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NumericalUnderflowError

_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def pr_sweeps(theta, mass, atom, ys, order, gammas, sigma, node_weight, atom_weight):
    """Run predictive-recursion updates in the given order.

    ``mass`` holds per-node prior mass (trapezoid weight times density) and
    is updated in place; the updated atom mass is returned.  ``node_weight``
    and ``atom_weight`` multiply the Gaussian kernel (all ones for the
    unselected model, ``1 / Pr(S | theta)`` for the truncated one).
    """
    theta = np.asarray(theta, float)
    inv_s = 1.0 / sigma
    c0 = _INV_SQRT2PI * inv_s
    for k in range(order.size):
        y = ys[order[k]]
        g = gammas[k]
        z = (y - theta) * inv_s
        f = np.exp(-0.5 * z * z) * (c0 * node_weight)
        f0 = np.exp(-0.5 * (y * inv_s) ** 2) * c0 * atom_weight
        fm = float(f @ mass) + f0 * atom
        if not fm >= 1e-300:
            raise NumericalUnderflowError(
                f"predictive recursion: marginal density {fm:.3g} at y={y:.6g}")
        mass *= (1.0 - g) + (g / fm) * f
        atom *= (1.0 - g) + g * f0 / fm
        total = mass.sum() + atom
        mass /= total
        atom /= total
    return atom


def _quantile_pair(theta, w, sigma, t, alpha):
    """Lower and upper acceptance endpoints at (theta, w); inlined truncated quantile."""
    lo_m = ndtr((-t - theta) / sigma)
    up_m = ndtr((theta - t) / sigma)
    c = lo_m + up_m
    mid = ndtr((t - theta) / sigma) - lo_m
    q0 = lo_m / c
    out = []
    for p in (alpha * w, alpha * w + 1.0 - alpha):
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.minimum(theta + sigma * ndtri(np.clip(c * p, 0.0, 1.0)), -t)
            r = c * (1.0 - p)
            right = np.where(r <= 0.5,
                             theta - sigma * ndtri(np.clip(r, 0.0, 1.0)),
                             theta + sigma * ndtri(np.clip(c * p + mid, 0.0, 1.0)))
            right = np.maximum(right, t)
        q = np.where(p < q0, left, np.where(p == q0, -t, right))
        q = np.where(p <= 0, -np.inf, np.where(p >= 1, np.inf, q))
        out.append(q)
    return out[0], out[1]


def acceptance_bounds(theta, w, sigma, t, alpha):
    return _quantile_pair(np.asarray(theta, float), np.asarray(w, float), sigma, t, alpha)


def invert_on_grid(theta, w, lower, upper, ys, sigma, t, alpha, tol, chunk=2048):
    """Invert acceptance regions for many observations at once.

    ``lower``/``upper`` are the acceptance endpoints at the grid nodes; ``w``
    is interpolated linearly between nodes during boundary bisection.
    Returns ``(row, lo, hi, edge)`` arrays, one entry per interval, sorted by
    row then position; ``edge`` flags intervals that touch the grid ends.
    """
    theta = np.asarray(theta, float)
    ys = np.asarray(ys, float)
    rows, los, his, edges = [], [], [], []
    n = theta.size
    for s in range(0, ys.size, chunk):
        yc = ys[s:s + chunk]
        member = (lower[None, :] <= yc[:, None]) & (yc[:, None] <= upper[None, :])
        pad = np.zeros((yc.size, 1), bool)
        d = np.diff(np.concatenate([pad, member, pad], axis=1).astype(np.int8), axis=1)
        r_start, j_start = np.nonzero(d == 1)      # first member index of each run
        r_end, j_end = np.nonzero(d == -1)         # one past the last member
        j_end = j_end - 1
        lo = theta[j_start].copy()
        hi = theta[j_end].copy()
        edge = (j_start == 0) | (j_end == n - 1)
        inner_lo = j_start > 0
        if inner_lo.any():
            k = j_start[inner_lo]
            lo[inner_lo] = _bisect(theta, w, yc[r_start[inner_lo]], k - 1, k,
                                   sigma, t, alpha, tol)
        inner_hi = j_end < n - 1
        if inner_hi.any():
            k = j_end[inner_hi]
            hi[inner_hi] = _bisect(theta, w, yc[r_end[inner_hi]], k + 1, k,
                                   sigma, t, alpha, tol)
        rows.append(r_start + s)
        los.append(lo)
        his.append(hi)
        edges.append(edge)
    if not rows:
        return (np.zeros(0, np.intp), np.zeros(0), np.zeros(0), np.zeros(0, bool))
    return (np.concatenate(rows), np.concatenate(los), np.concatenate(his),
            np.concatenate(edges))


def _bisect(theta, w, y, k_out, k_in, sigma, t, alpha, tol):
    # Bracket [a, b] with membership False at the outside end and True inside;
    # the cell spans nodes (k_out, k_in) in either order.
    a = theta[k_out].copy()
    b = theta[k_in].copy()
    ka = np.minimum(k_out, k_in)
    x0 = theta[ka]
    x1 = theta[ka + 1]
    w0 = w[ka]
    w1 = w[ka + 1]
    width = float(np.max(np.abs(b - a))) if a.size else 0.0
    iters = max(1, int(np.ceil(np.log2(max(width, tol) / tol))) + 1)
    for _ in range(iters):
        m = 0.5 * (a + b)
        wm = w0 + (w1 - w0) * (m - x0) / (x1 - x0)
        lq, uq = _quantile_pair(m, wm, sigma, t, alpha)
        inside = (lq <= y) & (y <= uq)
        b = np.where(inside, m, b)
        a = np.where(inside, a, m)
    return 0.5 * (a + b)
