"""Acceptance regions, their inversion into confidence sets, and baseline intervals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, NotSelectedError
from .gauss import GaussianModel, TruncatedGaussian, _tails
from .marginal import SelectionSpec
from .prior import TwoGroupsPrior, grid_for_data
from .spending import SpendingFunction
from ._backend import kernels

INVERSION_TOL = 1e-5


@dataclass(frozen=True)
class AcceptanceRegion:
    lo: float
    hi: float

    def __contains__(self, y):
        return self.lo <= y <= self.hi


@dataclass(frozen=True)
class ConfidenceSet:
    """Finite union of disjoint closed intervals, sorted."""

    intervals: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for (a, b), nxt in zip(ivs, ivs[1:] + ((np.inf, np.inf),)):
            if a > b or b > nxt[0]:
                raise ValueError(f"intervals must be sorted and disjoint: {ivs}")
        object.__setattr__(self, "intervals", ivs)

    @property
    def length(self):
        return set_length(self)

    def contains(self, theta):
        return any(a <= theta <= b for a, b in self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)


def set_length(cs: ConfidenceSet) -> float:
    """Total Lebesgue measure of the set."""
    return float(sum(b - a for a, b in cs.intervals))


def acceptance_region(tg: TruncatedGaussian, theta: float, alpha: float, w: float) -> AcceptanceRegion:
    """``[F_S^-1(alpha w), F_S^-1(alpha w + 1 - alpha)]`` at a single ``theta``."""
    if not 0.0 <= w <= 1.0:
        raise DomainError("w must lie in [0, 1]")
    lo, hi = kernels.acceptance_bounds(np.array([theta], float), np.array([w], float),
                                       tg.sigma, tg.t, alpha)
    return AcceptanceRegion(float(lo[0]), float(hi[0]))


@dataclass(frozen=True, eq=False)
class SetBatch:
    """Confidence sets for many observations, stored flat (one row per interval)."""

    n: int
    rows: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def lengths(self):
        return np.bincount(self.rows, weights=self.hi - self.lo, minlength=self.n)

    def covers(self, theta):
        theta = np.asarray(theta, float)
        hit = (self.lo <= theta[self.rows]) & (theta[self.rows] <= self.hi)
        return np.bincount(self.rows, weights=hit, minlength=self.n) > 0

    def to_sets(self):
        out = [[] for _ in range(self.n)]
        for r, a, b in zip(self.rows, self.lo, self.hi):
            out[r].append((a, b))
        return [ConfidenceSet(tuple(iv)) for iv in out]

    def __getitem__(self, i):
        sel = self.rows == i
        return ConfidenceSet(tuple(zip(self.lo[sel], self.hi[sel])))


def _extend(grid, lo_needed, hi_needed):
    h0, h1 = grid[1] - grid[0], grid[-1] - grid[-2]
    left = np.arange(int(np.ceil(max(grid[0] - lo_needed, 0.0) / h0)), 0, -1)
    right = np.arange(1, int(np.ceil(max(hi_needed - grid[-1], 0.0) / h1)) + 1)
    return np.concatenate([grid[0] - left * h0, grid, grid[-1] + right * h1])


def invert_batch(spend: SpendingFunction, tg: TruncatedGaussian, ys: Sequence[float],
                 tol: float = INVERSION_TOL, check_selected: bool = True) -> SetBatch:
    """Invert the ``w(theta)``-family of acceptance regions for every ``y``.

    Membership is scanned on the spending grid (extended with clamped ``w``
    far enough to contain every set), and each run boundary is refined by
    bisection on the membership indicator itself.
    """
    ys = np.atleast_1d(np.asarray(ys, float))
    if check_selected and np.any(np.abs(ys) <= tg.t):
        raise NotSelectedError(f"observations with |y| <= t={tg.t} were not selected")
    alpha = spend.alpha
    if ys.size == 0:
        return SetBatch(0, np.zeros(0, np.intp), np.zeros(0), np.zeros(0))
    reach = tg.t + 10.0 * tg.sigma
    todo = np.arange(ys.size)
    parts = []
    for attempt in range(6):
        grid = _extend(spend.theta_grid, ys[todo].min() - reach, ys[todo].max() + reach)
        w = spend(grid)
        lower, upper = kernels.acceptance_bounds(grid, w, tg.sigma, tg.t, alpha)
        rows, lo, hi, edge = kernels.invert_on_grid(
            grid, w, lower, upper, ys[todo], tg.sigma, tg.t, alpha, tol)
        bad = np.unique(rows[edge])
        last = attempt == 5
        keep = np.ones(rows.size, bool) if last else ~np.isin(rows, bad)
        if last:
            lo = np.where(edge & (lo <= grid[0]), -np.inf, lo)
            hi = np.where(edge & (hi >= grid[-1]), np.inf, hi)
        parts.append((todo[rows[keep]], lo[keep], hi[keep]))
        if last or bad.size == 0:
            break
        todo = todo[bad]
        reach *= 4.0
    rows = np.concatenate([p[0] for p in parts])
    lo = np.concatenate([p[1] for p in parts])
    hi = np.concatenate([p[2] for p in parts])
    order = np.lexsort((lo, rows))
    return SetBatch(ys.size, rows[order], lo[order], hi[order])


def invert_to_confidence_set(spend: SpendingFunction, tg: TruncatedGaussian, y: float,
                             tol: float = INVERSION_TOL) -> ConfidenceSet:
    """``{theta : y in A_{w(theta)}(theta)}`` as a union of intervals."""
    return invert_batch(spend, tg, [y], tol)[0]


def umau_batch(tg: TruncatedGaussian, ys, alpha: float, theta_grid=None,
               tol: float = INVERSION_TOL) -> SetBatch:
    ys = np.atleast_1d(np.asarray(ys, float))
    if theta_grid is None:
        theta_grid = grid_for_data(ys, tg.sigma)
    return invert_batch(SpendingFunction.constant(theta_grid, alpha, 0.5), tg, ys, tol)


def umau_set(tg: TruncatedGaussian, y: float, alpha: float, theta_grid=None) -> ConfidenceSet:
    """Selection-adjusted equal-tailed (UMAU) set: inversion with ``w = 1/2``."""
    return umau_batch(tg, [y], alpha, theta_grid)[0]


def nonselective_interval(model: GaussianModel, y: float, alpha: float) -> ConfidenceSet:
    """Ordinary ``y +/- sigma z_{1 - alpha/2}``, ignoring selection."""
    half = model.sigma * ndtri(1.0 - alpha / 2.0)
    return ConfidenceSet(((y - half, y + half),))


def nonselective_batch(model: GaussianModel, ys, alpha: float) -> SetBatch:
    ys = np.atleast_1d(np.asarray(ys, float))
    half = model.sigma * ndtri(1.0 - alpha / 2.0)
    return SetBatch(ys.size, np.arange(ys.size), ys - half, ys + half)


def sa_bayes_batch(prior: TwoGroupsPrior, model: GaussianModel, spec: SelectionSpec, ys,
                   alpha: float, n_nodes: int = 8001, span: float = 12.0) -> SetBatch:
    """Equal-tailed credible sets of the selection-adjusted two-groups posterior.

    The posterior is a point mass at 0 (weight proportional to
    ``(1 - p_hat) / Pr(S | 0)``) plus a continuous part proportional to
    ``N(theta; a y, v^2) / Pr(S | theta)``, whose normalising constant and
    CDF come from the trapezoid rule on ``a y +/- span * v``.
    """
    ys = np.atleast_1d(np.asarray(ys, float))
    if np.any(np.abs(ys) <= spec.t):
        raise NotSelectedError(f"observations with |y| <= t={spec.t} were not selected")
    sigma, t = model.sigma, spec.t
    n = ys.size
    if prior.p == 0:
        return SetBatch(n, np.arange(n), np.zeros(n), np.zeros(n))
    s2, tau2 = sigma ** 2, prior.tau2
    v2 = 1.0 / (1.0 / s2 + 1.0 / tau2)
    v = np.sqrt(v2)
    a = v2 / s2
    # Posterior signal probability from the unselected two-groups model (log scale).
    l1 = -0.5 * ys ** 2 / (s2 + tau2) - 0.5 * np.log(s2 + tau2)
    l0 = -0.5 * ys ** 2 / s2 - 0.5 * np.log(s2)
    with np.errstate(divide="ignore"):
        logit = np.log(prior.p) - np.log1p(-prior.p) + l1 - l0
    p_hat = 1.0 / (1.0 + np.exp(-logit))
    lo0, up0 = _tails(sigma, t, 0.0)
    atom_w = (1.0 - p_hat) / (lo0 + up0)

    # One shared theta grid so Pr(S | theta) is evaluated once; each y
    # integrates over its own window of n_nodes points around a*y.
    h = 2.0 * span * v / (n_nodes - 1)
    g0 = a * ys.min() - span * v - h
    grid = g0 + h * np.arange(int(np.ceil((a * (ys.max() - ys.min()) + 2 * span * v) / h)) + 3)
    lo_g, up_g = _tails(sigma, t, grid)
    inv_sel = 1.0 / (lo_g + up_g)
    offs = np.arange(n_nodes)
    lo_q = np.empty(n)
    hi_q = np.empty(n)
    for s in range(0, n, 256):
        yc = ys[s:s + 256]
        k0 = np.floor((a * yc - span * v - g0) / h).astype(np.intp)
        idx = k0[:, None] + offs[None, :]
        theta = grid[idx]
        z = (theta - a * yc[:, None]) / v
        g = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * v) * inv_sel[idx]
        cum = np.concatenate([np.zeros((yc.size, 1)),
                              np.cumsum(0.5 * h * (g[:, 1:] + g[:, :-1]), axis=1)], axis=1)
        d = cum[:, -1]
        slab_w = p_hat[s:s + 256] * d
        total = slab_w + atom_w[s:s + 256]
        slab_frac = slab_w / total
        atom_frac = 1.0 - slab_frac
        cont_cdf = cum / d[:, None] * slab_frac[:, None]       # continuous part only
        below0 = np.array([np.interp(0.0, th, cc) for th, cc in zip(theta, cont_cdf)])
        for q, out in ((alpha / 2.0, lo_q), (1.0 - alpha / 2.0, hi_q)):
            out[s:s + 256] = _mixed_quantile(theta, cont_cdf, below0, atom_frac, q)
    return SetBatch(n, np.arange(n), lo_q, hi_q)


def _mixed_quantile(theta, cont_cdf, below0, atom_frac, q):
    # G(x) = cont_cdf(x) + atom_frac * 1(x >= 0); return inf{x : G(x) >= q}.
    out = np.empty(theta.shape[0])
    on_atom = (below0 < q) & (q <= below0 + atom_frac)
    above = q > below0 + atom_frac
    for i in range(theta.shape[0]):
        if on_atom[i]:
            out[i] = 0.0
            continue
        target = q - atom_frac[i] if above[i] else q
        cc = cont_cdf[i]
        k = int(np.searchsorted(cc, target, side="left"))
        k = min(max(k, 1), cc.size - 1)
        c0, c1 = cc[k - 1], cc[k]
        frac = 0.0 if c1 <= c0 else (target - c0) / (c1 - c0)
        x = theta[i, k - 1] + frac * (theta[i, k] - theta[i, k - 1])
        # The continuous quantile must respect which side of the atom it is on.
        out[i] = max(x, 0.0) if above[i] else min(x, 0.0)
    return out


def sa_bayes_credible(prior: TwoGroupsPrior, model: GaussianModel, spec: SelectionSpec,
                      y: float, alpha: float) -> ConfidenceSet:
    return sa_bayes_batch(prior, model, spec, [y], alpha)[0]
