"""Predictive recursion (PR) estimate of a prior on a theta grid.

Each update mixes the current prior with its one-observation posterior,
``pi <- (1 - gamma) pi + gamma f(y; .) pi / m(y)``, with weights
``gamma_i = (i + 1)^(-a)`` decaying across all sweeps.  An optional atom at
zero is carried alongside the grid so sparse priors can be represented.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .gauss import GaussianModel, _tails
from .prior import GridPrior, grid_for_data, trapezoid_weights
from ._backend import kernels


@dataclass(frozen=True, eq=False)
class PRConfig:
    """Settings for :func:`pr_estimate`.

    Parameters
    ----------
    sweeps : int
        Passes through the data, each in a fresh random order.
    exponent_a : float
        Weight decay exponent, ``0.5 < a <= 1``.
    grid : array, optional
        Theta grid; by default wide enough to cover the data.
    initial : GridPrior, optional
        Starting prior.  Default: uniform density carrying half the mass,
        plus ``atom0 = 0.5`` when ``atom`` is on.
    atom : bool
        Whether to carry a point mass at zero.
    truncation : float, optional
        If set, the updates use the truncated likelihood ``f_S`` with
        threshold ``truncation`` (data must all satisfy ``|y| > truncation``).
    seed : int or Generator, optional
    """

    sweeps: int = 10
    exponent_a: float = 0.67
    grid: Optional[np.ndarray] = None
    initial: Optional[GridPrior] = None
    atom: bool = True
    truncation: Optional[float] = None
    seed: object = None

    def __post_init__(self):
        if int(self.sweeps) != self.sweeps or self.sweeps < 1:
            raise ConfigError("sweeps must be a positive integer")
        if not 0.5 < self.exponent_a <= 1.0:
            raise ConfigError("exponent_a must lie in (0.5, 1]")
        if self.truncation is not None and self.truncation <= 0:
            raise ConfigError("truncation threshold must be positive")


def pr_weights(count: int, a: float = 0.67):
    """``gamma_i = (i + 1)^(-a)`` for ``i = 1..count``."""
    return (np.arange(1, count + 1, dtype=float) + 1.0) ** (-a)


def initial_prior(grid, atom: bool = True) -> GridPrior:
    grid = np.asarray(grid, float)
    q = trapezoid_weights(grid)
    slab = 0.5 if atom else 1.0
    return GridPrior(grid, np.full(grid.size, slab / q.sum()), 1.0 - slab)


def _kernel_weights(grid, sigma, truncation):
    if truncation is None:
        return np.ones(grid.size), 1.0
    lo, up = _tails(sigma, truncation, grid)
    lo0, up0 = _tails(sigma, truncation, 0.0)
    return 1.0 / (lo + up), 1.0 / (lo0 + up0)


def _run(prior: GridPrior, ys, order, gammas, sigma, truncation):
    grid = np.ascontiguousarray(prior.grid, dtype=float)
    mass = np.array(prior.masses, dtype=float)
    node_w, atom_w = _kernel_weights(grid, sigma, truncation)
    atom = kernels.pr_sweeps(grid, mass, float(prior.atom0),
                             np.ascontiguousarray(ys, dtype=float),
                             np.ascontiguousarray(order, dtype=np.intp),
                             np.ascontiguousarray(gammas, dtype=float), float(sigma),
                             np.ascontiguousarray(node_w), float(atom_w))
    return GridPrior.from_masses(grid, mass, atom)


def pr_update(pi: GridPrior, model: GaussianModel, y: float, gamma: float,
              truncation: Optional[float] = None) -> GridPrior:
    """One PR step with weight ``gamma``.

    Raises
    ------
    NumericalUnderflowError
        If the current marginal density at ``y`` is below 1e-300.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    return _run(pi, np.array([y], float), np.zeros(1, np.intp), np.array([gamma]),
                model.sigma, truncation)


def pr_estimate(data, model: GaussianModel, cfg: PRConfig = PRConfig()) -> GridPrior:
    """Estimate the prior from ``data`` by ``cfg.sweeps`` randomised PR passes."""
    ys = np.asarray(data, float).ravel()
    if ys.size == 0:
        raise DataError("predictive recursion needs at least one observation")
    if not np.all(np.isfinite(ys)):
        raise DataError("data contain non-finite values")
    if cfg.truncation is not None and np.any(np.abs(ys) <= cfg.truncation):
        raise DataError("truncated-likelihood PR needs every |y| above the threshold")
    if cfg.initial is not None:
        start = cfg.initial
    else:
        grid = grid_for_data(ys, model.sigma) if cfg.grid is None else np.asarray(cfg.grid, float)
        start = initial_prior(grid, cfg.atom)
    rng = cfg.seed if isinstance(cfg.seed, np.random.Generator) else np.random.default_rng(cfg.seed)
    order = np.concatenate([rng.permutation(ys.size) for _ in range(cfg.sweeps)])
    gammas = pr_weights(order.size, cfg.exponent_a)
    return _run(start, ys, order, gammas, model.sigma, cfg.truncation)
