"""Objective ``H(w; theta)`` and the tabulated Bayes-optimal spending function.

``H(w; theta)`` is the marginal probability that a selected observation
falls in the biased acceptance region ``A_w(theta)``; minimising it pointwise
in ``w`` gives the spending function.  ``H`` can be non-smooth where a
quantile crosses the gap, so the search is a grid scan followed by
golden-section refinement inside the winning cell, never a derivative step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauss import GaussianModel, TruncatedGaussian
from .marginal import SelectedMarginal, SelectionSpec, marginal_cdf_at
from ._backend import kernels

DEFAULT_W_GRID = 201
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class SpendingFunction:
    """``w(theta)`` tabulated on a grid; linear in between, clamped outside."""

    theta_grid: np.ndarray
    w_values: np.ndarray
    alpha: float

    def __post_init__(self):
        g = np.asarray(self.theta_grid, float)
        w = np.asarray(self.w_values, float)
        if g.shape != w.shape or g.ndim != 1:
            raise ValueError("theta_grid and w_values must be 1-D and equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("theta_grid must be increasing")
        if np.any((w < 0) | (w > 1)):
            raise ValueError("spending values must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        object.__setattr__(self, "theta_grid", g)
        object.__setattr__(self, "w_values", w)

    def __call__(self, theta):
        out = np.clip(np.interp(np.asarray(theta, float), self.theta_grid, self.w_values), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def constant(cls, theta_grid, alpha: float, w: float = 0.5):
        """Flat spending function; ``w = 0.5`` gives the equal-tailed (UMAU) family."""
        g = np.asarray(theta_grid, float)
        return cls(g, np.full(g.shape, float(w)), alpha)


def _h(marg, sigma, t, theta, alpha, w):
    lo, hi = kernels.acceptance_bounds(theta, w, sigma, t, alpha)
    return marginal_cdf_at(marg, hi) - marginal_cdf_at(marg, lo)


def objective_H(marg: SelectedMarginal, tg: TruncatedGaussian, theta, alpha: float, w):
    """``M_S[F_S^-1(alpha w + 1 - alpha)] - M_S[F_S^-1(alpha w)]`` (broadcasts)."""
    theta, w = np.broadcast_arrays(np.asarray(theta, float), np.asarray(w, float))
    out = _h(marg, tg.sigma, tg.t, theta, alpha, w)
    return float(out) if np.ndim(out) == 0 else out


def _minimize_many(marg, tg, thetas, alpha, w_grid_size=DEFAULT_W_GRID, tol=1e-6,
                   chunk=256):
    thetas = np.atleast_1d(np.asarray(thetas, float))
    if w_grid_size < 3:
        raise ValueError("w_grid_size must be at least 3")
    wg = np.linspace(0.0, 1.0, w_grid_size)
    out = np.empty(thetas.size)
    for s in range(0, thetas.size, chunk):
        th = thetas[s:s + chunk]
        out[s:s + chunk] = _minimize_chunk(marg, tg, th, alpha, wg, tol)
    return out


def _minimize_chunk(marg, tg, th, alpha, wg, tol):
    sigma, t = tg.sigma, tg.t
    hg = _h(marg, sigma, t, th[:, None], alpha, wg[None, :])
    hmin = hg.min(axis=1, keepdims=True)
    # Among exact ties take the w closest to 1/2.
    dist = np.where(hg == hmin, np.abs(wg - 0.5)[None, :], np.inf)
    k = dist.argmin(axis=1)
    best_w = wg[k]
    best_h = hmin[:, 0]

    step = wg[1] - wg[0]
    a = np.clip(best_w - step, 0.0, 1.0)
    b = np.clip(best_w + step, 0.0, 1.0)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = _h(marg, sigma, t, th, alpha, x1)
    f2 = _h(marg, sigma, t, th, alpha, x2)
    iters = int(np.ceil(np.log(2 * step / tol) / -np.log(_INVPHI))) + 1
    for _ in range(iters):
        left = f1 <= f2
        # Keep [a, x2] where f1 <= f2, else [x1, b]; reuse the surviving probe.
        a, b = np.where(left, a, x1), np.where(left, x2, b)
        probe = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fp = _h(marg, sigma, t, th, alpha, probe)
        x1, x2, f1, f2 = (np.where(left, probe, x2), np.where(left, x1, probe),
                          np.where(left, fp, f2), np.where(left, f1, fp))
    cand = 0.5 * (a + b)
    hc = _h(marg, sigma, t, th, alpha, cand)
    return np.where(hc < best_h, cand, best_w)


def minimize_w(marg: SelectedMarginal, tg: TruncatedGaussian, theta, alpha: float,
               w_grid_size: int = DEFAULT_W_GRID):
    """Minimiser of ``H(.; theta)`` over ``[0, 1]``; vectorised over ``theta``."""
    out = _minimize_many(marg, tg, theta, alpha, w_grid_size)
    return float(out[0]) if np.ndim(theta) == 0 else out


def build_spending_function(marg: SelectedMarginal, model: GaussianModel, spec: SelectionSpec,
                            alpha: float, theta_grid, w_grid_size: int = DEFAULT_W_GRID
                            ) -> SpendingFunction:
    """Pointwise minimisation of ``H`` at every node of ``theta_grid``."""
    tg = TruncatedGaussian(model.sigma, spec.t)
    theta_grid = np.asarray(theta_grid, float)
    w = _minimize_many(marg, tg, theta_grid, alpha, w_grid_size)
    return SpendingFunction(theta_grid, np.clip(w, 0.0, 1.0), alpha)
