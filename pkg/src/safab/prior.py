"""Priors over the signal means.

Two representations are used throughout:

* parametric scenario priors (``TwoGroupsPrior``, ``BimodalMixPrior``,
  ``SkewExpPrior``), each a point mass at zero plus a continuous slab with
  weight ``p``;
* ``GridPrior``, a density tabulated on a theta grid (integrated with the
  trapezoid rule) plus an explicit atom at zero.

Scenario priors are canonicalised into a ``GridPrior`` by
:func:`evaluate_on_grid` whenever a numerical integral over theta is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .errors import ConfigError, DomainError
from .gauss import GaussianModel

DEFAULT_EXTENT = 10.0
DEFAULT_STEP = 0.025


def _check_p(p):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"nonnull fraction p must be in [0, 1], got {p}")


def _normal_pdf(x, var):
    return np.exp(-0.5 * x * x / var) / np.sqrt(2.0 * np.pi * var)


@dataclass(frozen=True)
class TwoGroupsPrior:
    """``p * N(0, tau2) + (1 - p) * delta_0``."""

    p: float
    tau2: float
    kind = "two_groups"

    def __post_init__(self):
        _check_p(self.p)
        if not self.tau2 > 0:
            raise DomainError(f"tau2 must be positive, got {self.tau2}")

    @property
    def atom0(self):
        return 1.0 - self.p

    def slab_pdf(self, theta):
        return self.p * _normal_pdf(np.asarray(theta, float), self.tau2)

    def tail_mass(self, extent):
        return self.p * 2.0 * ndtr(-extent / np.sqrt(self.tau2))

    def support_extent(self, tol=1e-10):
        return float(np.sqrt(self.tau2) * -stats.norm.ppf(tol / 2))

    def _sample_slab(self, rng, k):
        return rng.normal(0.0, np.sqrt(self.tau2), size=k)

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "tau2": self.tau2}


@dataclass(frozen=True)
class BimodalMixPrior:
    """``(p/2) N(-mu, tau2) + (p/2) N(mu, tau2) + (1 - p) delta_0``.

    ``mu`` has no default on purpose: callers must choose it.
    """

    p: float
    tau2: float
    mu: float
    kind = "bimodal"

    def __post_init__(self):
        _check_p(self.p)
        if not self.tau2 > 0:
            raise DomainError(f"tau2 must be positive, got {self.tau2}")

    @property
    def atom0(self):
        return 1.0 - self.p

    def slab_pdf(self, theta):
        theta = np.asarray(theta, float)
        return 0.5 * self.p * (_normal_pdf(theta - self.mu, self.tau2)
                               + _normal_pdf(theta + self.mu, self.tau2))

    def tail_mass(self, extent):
        s = np.sqrt(self.tau2)
        m = abs(self.mu)
        return self.p * (ndtr((-extent + m) / s) + ndtr((-extent - m) / s))

    def support_extent(self, tol=1e-10):
        return float(abs(self.mu) + np.sqrt(self.tau2) * -stats.norm.ppf(tol / 2))

    def _sample_slab(self, rng, k):
        signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
        return signs * self.mu + rng.normal(0.0, np.sqrt(self.tau2), size=k)

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "tau2": self.tau2, "mu": self.mu}


@dataclass(frozen=True)
class SkewExpPrior:
    """``p * (mu + Exponential(rate=lam)) + (1 - p) delta_0``.

    ``p`` has no default on purpose: callers must choose it.
    """

    p: float
    mu: float
    lam: float
    kind = "skew"

    def __post_init__(self):
        _check_p(self.p)
        if not self.lam > 0:
            raise DomainError(f"rate lam must be positive, got {self.lam}")

    @property
    def atom0(self):
        return 1.0 - self.p

    def slab_pdf(self, theta):
        theta = np.asarray(theta, float)
        with np.errstate(over="ignore"):
            dens = self.lam * np.exp(-self.lam * (theta - self.mu))
        return self.p * np.where(theta > self.mu, dens,
                                 np.where(theta == self.mu, 0.5 * self.lam, 0.0))

    def tail_mass(self, extent):
        lower = self.p if self.mu < -extent else 0.0
        return lower + self.p * np.exp(-self.lam * max(extent - self.mu, 0.0))

    def support_extent(self, tol=1e-10):
        return float(max(abs(self.mu), self.mu - np.log(tol) / self.lam))

    def _sample_slab(self, rng, k):
        return self.mu + rng.exponential(1.0 / self.lam, size=k)

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "mu": self.mu, "lam": self.lam}


ScenarioPrior = Union[TwoGroupsPrior, BimodalMixPrior, SkewExpPrior]


def trapezoid_weights(grid):
    """Quadrature weights ``q`` such that ``sum(q * f)`` is the trapezoid rule."""
    grid = np.asarray(grid, float)
    h = np.diff(grid)
    q = np.zeros_like(grid)
    q[:-1] += 0.5 * h
    q[1:] += 0.5 * h
    return q


@dataclass(frozen=True, eq=False)
class GridPrior:
    """Density on a theta grid (w.r.t. trapezoid measure) plus an atom at 0.

    A two-point grid reproduces a discrete prior exactly: the trapezoid
    weights of ``[a, b]`` are ``(b - a) / 2`` each.
    """

    grid: np.ndarray
    density: np.ndarray
    atom0: float = 0.0
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        dens = np.array(self.density, dtype=float)
        if grid.ndim != 1 or grid.shape != dens.shape or grid.size < 2:
            raise DomainError("grid and density must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(dens < 0) or not 0.0 <= self.atom0 <= 1.0:
            raise DomainError("density must be nonnegative and atom0 in [0, 1]")
        grid.flags.writeable = False
        dens.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atom0", float(self.atom0))
        q = trapezoid_weights(grid)
        q.flags.writeable = False
        object.__setattr__(self, "weights", q)
        total = self.total_mass()
        if abs(total - 1.0) > 1e-8:
            raise DomainError(f"prior mass is {total!r}, expected 1 within 1e-8")
        if self.atom0 > 0 and not np.any(grid == 0.0):
            raise DomainError("grid must contain 0 when atom0 > 0")

    @classmethod
    def from_masses(cls, grid, masses, atom0=0.0):
        """Build from per-node masses (trapezoid weight times density), renormalising."""
        grid = np.asarray(grid, float)
        masses = np.asarray(masses, float)
        total = masses.sum() + atom0
        q = trapezoid_weights(grid)
        return cls(grid, masses / total / q, atom0 / total)

    @classmethod
    def point_mass(cls, theta0: float = 0.0):
        """Unit mass at ``theta0`` (two-node grid whose second node is empty)."""
        if theta0 == 0.0:
            return cls(np.array([-1.0, 0.0, 1.0]), np.zeros(3), 1.0)
        return cls(np.array([theta0, theta0 + 1.0]), np.array([2.0, 0.0]))

    @property
    def masses(self):
        return self.weights * self.density

    def total_mass(self):
        return float(self.masses.sum() + self.atom0)

    def mean(self):
        return float(np.sum(self.masses * self.grid))

    def second_moment(self):
        return float(np.sum(self.masses * self.grid ** 2))

    def support_extent(self, tol=1e-10):
        """Smallest ``T`` with mass outside ``[-T, T]`` below ``tol`` (grid resolution)."""
        m = self.masses
        order = np.argsort(-np.abs(self.grid))
        tail = np.cumsum(m[order])
        above = np.abs(self.grid[order])[tail > tol]
        return float(above[0]) if above.size else 0.0

    def to_dict(self):
        return {"kind": "grid", "atom0": self.atom0, "n": int(self.grid.size)}


AnyPrior = Union[TwoGroupsPrior, BimodalMixPrior, SkewExpPrior, GridPrior]


def prior_from_dict(d: dict) -> ScenarioPrior:
    """Parse ``{"kind": "two_groups", "p": 0.2, "tau2": 3.0}`` and friends."""
    try:
        kind = d["kind"]
        if kind == "two_groups":
            return TwoGroupsPrior(p=float(d["p"]), tau2=float(d["tau2"]))
        if kind == "bimodal":
            return BimodalMixPrior(p=float(d["p"]), tau2=float(d["tau2"]), mu=float(d["mu"]))
        if kind == "skew":
            return SkewExpPrior(p=float(d["p"]), mu=float(d["mu"]), lam=float(d["lam"]))
    except KeyError as exc:
        raise ConfigError(f"prior config missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad prior config {d!r}: {exc}") from None
    raise ConfigError(f"unknown prior kind {d.get('kind')!r}")


def default_theta_grid(extent: float = DEFAULT_EXTENT, step: float = DEFAULT_STEP):
    """Uniform symmetric grid ``[-E, E]`` containing 0; E rounded up to a step multiple."""
    k = int(np.ceil(max(extent, DEFAULT_EXTENT) / step - 1e-9))
    return np.arange(-k, k + 1) * step


def grid_for_data(y, sigma=1.0, step: float = DEFAULT_STEP, extent: float = DEFAULT_EXTENT):
    """Default grid, widened when ``max|y| + 4 sigma`` exceeds the extent."""
    y = np.asarray(y, float)
    need = float(np.max(np.abs(y))) + 4.0 * sigma if y.size else 0.0
    return default_theta_grid(max(extent, need), step)


def evaluate_on_grid(prior: ScenarioPrior, grid, tol: float = 1e-6) -> GridPrior:
    """Tabulate a scenario prior on ``grid`` (atom weight copied exactly).

    Raises :class:`ConfigError` when more than ``tol`` of the slab mass lies
    outside the grid.
    """
    grid = np.asarray(grid, float)
    extent = min(-grid[0], grid[-1])
    if prior.p > 0 and prior.tail_mass(extent) > tol:
        raise ConfigError(
            f"grid [{grid[0]}, {grid[-1]}] does not cover the support of {prior.to_dict()}")
    if prior.atom0 > 0 and not np.any(grid == 0.0):
        raise ConfigError("grid must contain 0 to carry the point mass")
    if prior.p == 0:
        return GridPrior(grid, np.zeros_like(grid), 1.0)
    dens = prior.slab_pdf(grid)
    q = trapezoid_weights(grid)
    dens = dens * (prior.p / np.sum(q * dens))
    return GridPrior(grid, dens, prior.atom0)


def sample_theta(prior: AnyPrior, count: int, seed=None):
    """Draw ``count`` means; ``seed`` may be an int or a ``np.random.Generator``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if count <= 0:
        raise DomainError("count must be positive")
    if isinstance(prior, GridPrior):
        return _sample_grid(prior, count, rng)
    nonnull = rng.random(count) < prior.p
    out = np.zeros(count)
    k = int(nonnull.sum())
    if k:
        out[nonnull] = prior._sample_slab(rng, k)
    return out


def _sample_grid(prior: GridPrior, count, rng):
    # Exact draws from the piecewise-linear density implied by the trapezoid rule.
    g, d = prior.grid, prior.density
    h = np.diff(g)
    cell_mass = 0.5 * h * (d[:-1] + d[1:])
    probs = np.append(cell_mass, prior.atom0)
    probs = probs / probs.sum()
    idx = rng.choice(probs.size, size=count, p=probs)
    out = np.zeros(count)
    cont = idx < cell_mass.size
    j = idx[cont]
    u = rng.random(j.size)
    a, b = d[j], d[j + 1]
    # Solve a*s + (b - a)*s^2/2 = u*(a + b)/2 for s in [0, 1].
    slope = b - a
    rhs = u * (a + b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s_quad = (-a + np.sqrt(a * a + slope * rhs)) / slope
    s = np.where(np.abs(slope) > 1e-12 * np.maximum(a + b, 1e-300), s_quad, u)
    out[cont] = g[j] + np.clip(s, 0.0, 1.0) * h[j]
    return out


def marginal_pdf(prior: AnyPrior, model: GaussianModel, y):
    """Unselected marginal density ``m(y) = int f(y; theta) pi(dtheta)``."""
    y = np.asarray(y, float)
    s2 = model.sigma ** 2
    if isinstance(prior, TwoGroupsPrior):
        out = prior.p * _normal_pdf(y, s2 + prior.tau2) + (1 - prior.p) * _normal_pdf(y, s2)
    elif isinstance(prior, BimodalMixPrior):
        v = s2 + prior.tau2
        out = (0.5 * prior.p * (_normal_pdf(y - prior.mu, v) + _normal_pdf(y + prior.mu, v))
               + (1 - prior.p) * _normal_pdf(y, s2))
    elif isinstance(prior, SkewExpPrior):
        k = 1.0 / (model.sigma * prior.lam)
        out = (prior.p * stats.exponnorm.pdf(y, k, loc=prior.mu, scale=model.sigma)
               + (1 - prior.p) * _normal_pdf(y, s2))
    else:
        diff = y[..., None] - prior.grid
        out = _normal_pdf(diff, s2) @ prior.masses + prior.atom0 * _normal_pdf(y, s2)
    return float(out) if np.ndim(out) == 0 else out
