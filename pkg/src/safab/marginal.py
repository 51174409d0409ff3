"""Marginal law of the selected observations under joint or conditional selection."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateSelectionError, DomainError
from .gauss import GaussianModel, _tails
from .prior import (AnyPrior, GridPrior, TwoGroupsPrior, default_theta_grid,
                    evaluate_on_grid)

DEFAULT_RESOLUTION = 0.01  # y-grid step in units of sigma
_SQRT2PI = np.sqrt(2.0 * np.pi)


class Mechanism(str, enum.Enum):
    JOINT = "joint"
    CONDITIONAL = "conditional"


@dataclass(frozen=True)
class SelectionSpec:
    """Two-sided selection region ``{|y| > t}`` and how it acts."""

    t: float
    mechanism: Mechanism = Mechanism.JOINT

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"threshold must be positive, got {self.t}")
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))


@dataclass(frozen=True, eq=False)
class SelectedMarginal:
    """Tabulated ``m_S`` and ``M_S`` on the two rays ``|y| >= t``.

    ``grid_y`` runs over ``[-ymax, -t]`` then ``[t, ymax]``; the gap carries no
    nodes.  ``prob_S`` is the marginal selection probability (joint only).
    """

    grid_y: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    t: float
    mechanism: Mechanism
    prob_S: Optional[float] = None

    def cdf_at(self, y):
        return marginal_cdf_at(self, y)


def marginal_cdf_at(m: SelectedMarginal, y):
    """``M_S(y)``: 0 below the grid, 1 above, flat on the gap.

    Between nodes the CDF is the cubic Hermite interpolant using the
    tabulated density as its slope (error O(h^4) rather than O(h^2)).
    """
    y = np.asarray(y, float)
    g, F, f = m.grid_y, m.cdf, m.density
    k = np.clip(np.searchsorted(g, y, side="right") - 1, 0, g.size - 2)
    h = g[k + 1] - g[k]
    s = np.clip((y - g[k]) / h, 0.0, 1.0)
    s2, s3 = s * s, s * s * s
    val = ((2 * s3 - 3 * s2 + 1) * F[k] + (-2 * s3 + 3 * s2) * F[k + 1]
           + h * ((s3 - 2 * s2 + s) * f[k] + (s3 - s2) * f[k + 1]))
    val = np.clip(val, F[k], F[k + 1])
    # The cell spanning the gap carries no mass.
    val = np.where(g[k] == -m.t, F[k], val)
    out = np.where(y < g[0], 0.0, np.where(y >= g[-1], 1.0, val))
    return float(out) if np.ndim(out) == 0 else out


def _y_grid(t, ymax, step):
    n = int(np.ceil((ymax - t) / step)) + 1
    ray = t + np.arange(n) * step
    return np.concatenate([-ray[::-1], ray])


def _ymax(prior, sigma, t):
    if isinstance(prior, TwoGroupsPrior):
        slab_var, extent = prior.tau2, prior.support_extent(1e-10)
    else:
        nonnull = max(1.0 - prior.atom0, 1e-300)
        slab_var = prior.second_moment() / nonnull
        extent = prior.support_extent(1e-10)
    return max(t + 8.0 * np.sqrt(sigma ** 2 + slab_var), extent + 8.0 * sigma)


def _as_grid(prior: AnyPrior) -> GridPrior:
    if isinstance(prior, GridPrior):
        return prior
    return evaluate_on_grid(prior, default_theta_grid(prior.support_extent(1e-9)))


def _node_terms(prior: GridPrior):
    """(theta, mass) pairs with the atom folded in and empty nodes dropped."""
    theta = prior.grid
    mass = prior.masses
    keep = mass > 0
    theta, mass = theta[keep], mass[keep]
    if prior.atom0 > 0:
        theta = np.append(theta, 0.0)
        mass = np.append(mass, prior.atom0)
    return theta, mass


def _mixture_columns(y, theta, sigma, t, mass, chunk=512):
    """Sum over nodes of mass * (pdf, lower cdf, upper sf) at each y, chunked by y."""
    pdf = np.empty(y.size)
    lower = np.empty(y.size)
    upper = np.empty(y.size)
    for s in range(0, y.size, chunk):
        z = (y[s:s + chunk, None] - theta[None, :]) / sigma
        pdf[s:s + chunk] = (np.exp(-0.5 * z * z) @ mass) / (_SQRT2PI * sigma)
        lower[s:s + chunk] = ndtr(z) @ mass
        upper[s:s + chunk] = ndtr(-z) @ mass
    return pdf, lower, upper


def _assemble(y, pdf, lower, upper, t, norm):
    left = y <= -t
    cdf = np.where(left, lower / norm, 1.0 - upper / norm)
    # Right ray starts at the gap value; enforce exact flatness across it.
    gap = cdf[left][-1]
    cdf = np.where(left, cdf, np.maximum(cdf, gap))
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    return pdf / norm, cdf


def joint_marginal(prior: AnyPrior, model: GaussianModel, spec: SelectionSpec,
                   resolution: float = DEFAULT_RESOLUTION) -> SelectedMarginal:
    """``m(y) 1(|y|>t) / Pr(S)`` with ``Pr(S)`` the marginal selection probability."""
    sigma, t = model.sigma, spec.t
    if not isinstance(prior, TwoGroupsPrior):
        prior = _as_grid(prior)
    y = _y_grid(t, _ymax(prior, sigma, t), resolution * sigma)
    if isinstance(prior, TwoGroupsPrior):
        theta = np.zeros(2)
        scales = np.array([np.sqrt(sigma ** 2 + prior.tau2), sigma])
        mass = np.array([prior.p, 1.0 - prior.p])
        z = y[:, None] / scales
        pdf = (np.exp(-0.5 * z * z) / (_SQRT2PI * scales)) @ mass
        lower = ndtr(z) @ mass
        upper = ndtr(-z) @ mass
        prob_s = float(2.0 * (ndtr(-t / scales) @ mass))
    else:
        theta, mass = _node_terms(prior)
        pdf, lower, upper = _mixture_columns(y, theta, sigma, t, mass)
        lo, up = _tails(sigma, t, theta)
        prob_s = float((lo + up) @ mass)
    if prob_s < 1e-12:
        raise DegenerateSelectionError(f"Pr(S) = {prob_s:.3g} is numerically zero")
    density, cdf = _assemble(y, pdf, lower, upper, t, prob_s)
    return SelectedMarginal(y, density, cdf, t, Mechanism.JOINT, prob_s)


def conditional_marginal(prior: AnyPrior, model: GaussianModel, spec: SelectionSpec,
                         resolution: float = DEFAULT_RESOLUTION) -> SelectedMarginal:
    """``1(|y|>t) int pi(theta) f(y; theta) / Pr(S | theta) dtheta``."""
    sigma, t = model.sigma, spec.t
    grid = _as_grid(prior)
    y = _y_grid(t, _ymax(grid, sigma, t), resolution * sigma)
    theta, mass = _node_terms(grid)
    lo, up = _tails(sigma, t, theta)
    pdf, lower, upper = _mixture_columns(y, theta, sigma, t, mass / (lo + up))
    density, cdf = _assemble(y, pdf, lower, upper, t, 1.0)
    return SelectedMarginal(y, density, cdf, t, Mechanism.CONDITIONAL, None)


def selected_marginal(prior: AnyPrior, model: GaussianModel, spec: SelectionSpec,
                      resolution: float = DEFAULT_RESOLUTION) -> SelectedMarginal:
    """Dispatch on ``spec.mechanism``."""
    if spec.mechanism is Mechanism.JOINT:
        return joint_marginal(prior, model, spec, resolution)
    return conditional_marginal(prior, model, spec, resolution)


def estimated_marginal(prior_hat: GridPrior, model: GaussianModel, spec: SelectionSpec,
                       resolution: float = DEFAULT_RESOLUTION) -> SelectedMarginal:
    """Plug-in marginal for an estimated prior; same construction as the true-prior case."""
    return selected_marginal(prior_hat, model, spec, resolution)
