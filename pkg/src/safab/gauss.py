"""Gaussian and two-sided truncated Gaussian primitives.

Everything here is vectorised over numpy broadcasting; scalar inputs give
Python floats back.  The truncated model is ``N(theta, sigma^2)`` restricted
to ``{y : |y| > t}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError

_SQRT2PI = np.sqrt(2.0 * np.pi)


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class GaussianModel:
    """Sampling model ``y ~ N(theta, sigma^2)`` with known noise scale."""

    sigma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian sampling model conditioned on ``|y| > t``."""

    sigma: float
    t: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not np.isfinite(self.t) or self.t <= 0:
            raise DomainError(f"threshold t must be positive, got {self.t}")

    @property
    def model(self) -> GaussianModel:
        return GaussianModel(self.sigma)


def norm_cdf(z):
    """Standard normal CDF."""
    return _out(ndtr(np.asarray(z, dtype=float)))


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _out(np.exp(-0.5 * z * z) / _SQRT2PI)


def norm_quantile(p):
    """Standard normal quantile; raises :class:`DomainError` outside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("norm_quantile requires 0 < p < 1")
    return _out(ndtri(p))


def _tails(sigma, t, theta):
    # Lower-ray mass P(Y <= -t), upper-ray mass P(Y > t), each as a single
    # Phi evaluation so neither suffers cancellation for |theta| >> t.
    theta = np.asarray(theta, dtype=float)
    lo = ndtr((-t - theta) / sigma)
    up = ndtr((theta - t) / sigma)
    return lo, up


def selection_prob(model: GaussianModel, theta, t: float):
    """``Pr(|Y| > t | theta)`` for ``Y ~ N(theta, sigma^2)``."""
    if t <= 0:
        raise DomainError("t must be positive")
    lo, up = _tails(model.sigma, t, theta)
    return _out(lo + up)


def trunc_pdf(tg: TruncatedGaussian, theta, y):
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, up = _tails(tg.sigma, tg.t, theta)
    z = (y - theta) / tg.sigma
    dens = np.exp(-0.5 * z * z) / (_SQRT2PI * tg.sigma) / (lo + up)
    return _out(np.where(np.abs(y) > tg.t, dens, 0.0))


def trunc_cdf(tg: TruncatedGaussian, theta, y):
    """CDF of the truncated model; flat on ``[-t, t]``."""
    return _out(_trunc_cdf(tg.sigma, tg.t, theta, y))


def _trunc_cdf(sigma, t, theta, y):
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, up = _tails(sigma, t, theta)
    c = lo + up
    left = ndtr((y - theta) / sigma) / c
    right = 1.0 - ndtr((theta - y) / sigma) / c
    return np.where(y <= -t, left, np.where(y <= t, lo / c, right))


def jump_prob(tg: TruncatedGaussian, theta):
    """The CDF value on the gap, ``F_S(-t; theta)``, where the quantile jumps."""
    lo, up = _tails(tg.sigma, tg.t, theta)
    return _out(lo / (lo + up))


def trunc_quantile(tg: TruncatedGaussian, theta, p):
    """Generalised inverse ``inf{y : F_S(y; theta) >= p}``.

    At the jump probability ``F_S(-t; theta)`` the left endpoint ``-t`` is
    returned.  Raises :class:`DomainError` for p outside (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise DomainError("trunc_quantile requires 0 < p < 1")
    return _out(_trunc_quantile(tg.sigma, tg.t, theta, p_arr))


def _trunc_quantile(sigma, t, theta, p):
    """Vectorised quantile; p may be 0 or 1 (giving -inf / +inf)."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    lo, up = _tails(sigma, t, theta)
    c = lo + up
    mid = ndtr((t - theta) / sigma) - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = lo / c
        left = theta + sigma * ndtri(np.clip(c * p, 0.0, 1.0))
        left = np.minimum(left, -t)
        # Right ray: pick whichever of the two algebraically equal forms
        # keeps the ndtri argument small.
        r = c * (1.0 - p)
        right_up = theta - sigma * ndtri(np.clip(r, 0.0, 1.0))
        right_dn = theta + sigma * ndtri(np.clip(c * p + mid, 0.0, 1.0))
        right = np.where(r <= 0.5, right_up, right_dn)
        right = np.maximum(right, t)
    out = np.where(p < q0, left, np.where(p == q0, -t, right))
    out = np.where(p <= 0, -np.inf, np.where(p >= 1, np.inf, out))
    return out


def trunc_sample(tg: TruncatedGaussian, theta, size=None, rng=None):
    """Draw from the truncated law by inverting its CDF.

    ``theta`` broadcasts against ``size``; ``rng`` is a seed or Generator.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=float)
    shape = theta.shape if size is None else size
    # Shift the [0, 1) draws to the open interval so no endpoint maps to +/-inf.
    u = rng.random(shape) + 2.0 ** -54
    return _trunc_quantile(tg.sigma, tg.t, theta, u)
