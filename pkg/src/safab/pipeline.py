"""End-to-end interval construction: selection rule, prior, spending, inversion.

Empirical Bayes methods estimate the prior separately for each fold from
the other folds only, so no observation influences the spending function
used for its own interval.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, ndtr

from .confset import (SetBatch, invert_batch, nonselective_batch, sa_bayes_batch,
                      umau_batch)
from .errors import ConfigError, DataError
from .gauss import GaussianModel, TruncatedGaussian, _tails
from .marginal import Mechanism, SelectionSpec, selected_marginal
from .pr import PRConfig, pr_estimate
from .prior import AnyPrior, ScenarioPrior, TwoGroupsPrior, default_theta_grid
from .spending import SpendingFunction, build_spending_function

log = logging.getLogger(__name__)

ORACLE, PEB, NPEB, UMAU, NONSELECTIVE, SABAYES = (
    "oracle", "peb", "npeb", "umau", "nonselective", "sabayes")
METHOD_KINDS = (ORACLE, PEB, NPEB, UMAU, NONSELECTIVE, SABAYES)
METHOD_LABELS = {ORACLE: "Oracle", PEB: "PEB", NPEB: "NPEB", UMAU: "UMAU",
                 NONSELECTIVE: "non-sa UMAU", SABAYES: "saBayes"}


# --- selection rules --------------------------------------------------------

def bh_pvalues(ys, sigma=1.0):
    return 2.0 * ndtr(-np.abs(np.asarray(ys, float)) / sigma)


def bh_kstar(pvalues, q_star: float) -> int:
    """Largest ``k`` with ``p_(k) <= k q / m`` (0 when there is none)."""
    p = np.sort(np.asarray(pvalues, float))
    m = p.size
    ok = np.nonzero(p <= np.arange(1, m + 1) * q_star / m)[0]
    return int(ok[-1] + 1) if ok.size else 0


def bh_threshold(ys, q_star: float, sigma: float = 1.0) -> Optional[float]:
    """Magnitude threshold induced by Benjamini-Hochberg at level ``q_star``.

    Returns the ``(k*+1)``-th largest ``|y|``, ``None`` when nothing is
    rejected, and ``min|y| * (1 - 1e-9)`` when everything is.
    """
    ys = np.asarray(ys, float)
    if ys.size == 0:
        raise DataError("BH needs at least one observation")
    if not 0.0 < q_star < 1.0:
        raise ConfigError("q_star must lie in (0, 1)")
    k = bh_kstar(bh_pvalues(ys, sigma), q_star)
    if k == 0:
        return None
    mags = np.sort(np.abs(ys))[::-1]
    if k == ys.size:
        return float(mags[-1] * (1.0 - 1e-9))
    return float(mags[k])


@dataclass(frozen=True)
class SelectionRule:
    """``kind`` is ``"fixed"`` (``value`` = t) or ``"bh"`` (``value`` = q*)."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind == "fixed":
            if not self.value > 0:
                raise ConfigError("fixed threshold must be positive")
        elif self.kind == "bh":
            if not 0.0 < self.value < 1.0:
                raise ConfigError("BH level must lie in (0, 1)")
        else:
            raise ConfigError(f"unknown selection rule {self.kind!r}")

    @classmethod
    def fixed(cls, t: float):
        return cls("fixed", float(t))

    @classmethod
    def bh(cls, q_star: float):
        return cls("bh", float(q_star))

    def threshold(self, ys, sigma=1.0) -> Optional[float]:
        if self.kind == "fixed":
            return self.value
        return bh_threshold(ys, self.value, sigma)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


# --- folds and methods ------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    K: int = 5
    seed: object = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError("K must be an integer >= 2")

    def assign(self, n: int, rng=None):
        """Balanced random fold labels; every fold nonempty when ``n >= K``."""
        if n < self.K:
            raise DataError(f"{n} observations cannot fill {self.K} folds")
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        return rng.permutation(np.arange(n) % self.K)


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    prior: Optional[ScenarioPrior] = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigError(f"unknown method {self.kind!r}")
        if self.kind in (ORACLE, SABAYES) and self.prior is None:
            raise ConfigError(f"method {self.kind} needs the true prior")
        if self.kind == SABAYES and not isinstance(self.prior, TwoGroupsPrior):
            raise ConfigError("saBayes is defined for the two-groups prior only")

    @property
    def label(self):
        return METHOD_LABELS[self.kind]

    @property
    def uses_folds(self):
        return self.kind in (PEB, NPEB)


# --- parametric EB ----------------------------------------------------------

_U = np.linspace(-8.0, 8.0, 321)
_U_W = np.exp(-0.5 * _U ** 2) / np.sqrt(2 * np.pi) * (_U[1] - _U[0])


def two_groups_loglik(ys, p, tau2, model: GaussianModel, spec: Optional[SelectionSpec] = None):
    """Log-likelihood of ``ys`` under the two-groups marginal.

    With no ``spec`` (or the joint mechanism) this is the ordinary
    marginal; for the conditional mechanism each term is
    ``int pi(theta) f(y; theta) / Pr(S | theta) dtheta``.
    """
    ys = np.asarray(ys, float)
    s2 = model.sigma ** 2
    null = np.exp(-0.5 * ys ** 2 / s2) / np.sqrt(2 * np.pi * s2)
    if spec is None or spec.mechanism is Mechanism.JOINT:
        v = s2 + tau2
        slab = np.exp(-0.5 * ys ** 2 / v) / np.sqrt(2 * np.pi * v)
        dens = p * slab + (1 - p) * null
    else:
        lo0, up0 = _tails(model.sigma, spec.t, 0.0)
        theta = np.sqrt(tau2) * _U
        lo, up = _tails(model.sigma, spec.t, theta)
        kern = np.exp(-0.5 * (ys[:, None] - theta[None, :]) ** 2 / s2) / np.sqrt(2 * np.pi * s2)
        slab = kern @ (_U_W / (lo + up))
        dens = p * slab + (1 - p) * null / (lo0 + up0)
    return float(np.sum(np.log(np.maximum(dens, 1e-300))))


def peb_fit(train, model: GaussianModel, spec: Optional[SelectionSpec] = None,
            tol: float = 1e-6, maxiter: int = 4000) -> TwoGroupsPrior:
    """Maximum marginal likelihood two-groups fit by Nelder-Mead on (logit p, log tau2)."""
    ys = np.asarray(train, float)
    if ys.size == 0:
        raise DataError("parametric EB fit needs data")
    s2 = model.sigma ** 2
    bounds = np.array([[logit(1e-6), logit(1 - 1e-6)], [np.log(1e-4 * s2), np.log(1e4 * s2)]])

    def unpack(x):
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
        return float(expit(x[0])), float(np.exp(x[1]))

    def nll(x):
        return -two_groups_loglik(ys, *unpack(x), model, spec)

    p0 = 0.3
    tau0 = max(float(np.mean(ys ** 2)) - s2, 0.5 * s2) / p0
    best = None
    for start in ([logit(p0), np.log(tau0)], [logit(0.05), np.log(4.0 * s2)]):
        res = minimize(nll, np.array(start), method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": tol, "maxiter": maxiter})
        if not res.success:
            log.warning("PEB optimiser did not converge: %s", res.message)
        if best is None or res.fun < best.fun:
            best = res
    p, tau2 = unpack(best.x)
    return TwoGroupsPrior(p, tau2)


# --- spending-function construction ----------------------------------------

def spending_grid(prior: AnyPrior, model: GaussianModel):
    return default_theta_grid(max(10.0, prior.support_extent(1e-9) + 4.0 * model.sigma))


def spending_for_prior(prior: AnyPrior, model: GaussianModel, spec: SelectionSpec,
                       alpha: float) -> SpendingFunction:
    marg = selected_marginal(prior, model, spec)
    return build_spending_function(marg, model, spec, alpha, spending_grid(prior, model))


class SpendingCache:
    """Memoises oracle spending functions; ``w*`` depends on the prior, not the batch."""

    def __init__(self):
        self._store = {}

    def get(self, prior, model, spec, alpha):
        key = (prior, model.sigma, spec.t, spec.mechanism, alpha)
        if key not in self._store:
            self._store[key] = spending_for_prior(prior, model, spec, alpha)
        return self._store[key]


def estimate_prior(train, method: str, model: GaussianModel, spec: SelectionSpec,
                   pr_config: Optional[PRConfig] = None, rng=None) -> AnyPrior:
    """Fit the EB prior on training data.

    When every training observation is a draw from the truncated law
    (conditional mechanism, all of them beyond ``t``) the likelihood (PEB) and
    the PR kernel (NPEB) use ``f_S``.  Otherwise the ordinary ``f`` is used on
    all held-out observations, selected or not.
    """
    train = np.asarray(train, float)
    conditional = (spec.mechanism is Mechanism.CONDITIONAL
                   and bool(np.all(np.abs(train) > spec.t)))
    if method == PEB:
        return peb_fit(train, model, spec if conditional else None)
    if method == NPEB:
        cfg = pr_config or PRConfig()
        cfg = PRConfig(sweeps=cfg.sweeps, exponent_a=cfg.exponent_a, grid=cfg.grid,
                       initial=cfg.initial, atom=cfg.atom,
                       truncation=spec.t if conditional else cfg.truncation,
                       seed=rng if rng is not None else cfg.seed)
        return pr_estimate(train, model, cfg)
    raise ConfigError(f"method {method!r} does not estimate a prior")


# --- running a method -------------------------------------------------------

@dataclass(eq=False)
class MethodResult:
    method: str
    y: np.ndarray                   # selected observations
    index: np.ndarray               # their positions in the input data
    sets: SetBatch
    t: Optional[float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def lengths(self):
        return self.sets.lengths()

    def coverage(self, theta_all):
        return self.sets.covers(np.asarray(theta_all, float)[self.index])


def _empty(method, t, diag):
    return MethodResult(method, np.zeros(0), np.zeros(0, np.intp),
                        SetBatch(0, np.zeros(0, np.intp), np.zeros(0), np.zeros(0)), t, diag)


def run_method(data, method: MethodSpec, rule: SelectionRule, mechanism: Mechanism,
               model: GaussianModel, alpha: float, folds: FoldPlan = FoldPlan(),
               rng=None, fold_labels=None, t: Optional[float] = None,
               cache: Optional[SpendingCache] = None,
               pr_config: Optional[PRConfig] = None,
               on_fit: Optional[Callable[[int, np.ndarray], None]] = None) -> MethodResult:
    """Confidence sets for the selected observations of ``data``.

    ``on_fit(k, train_index)`` is called before each fold's prior is
    estimated; tests use it to check that fold ``k`` never trains on itself.
    ``t`` overrides the rule's threshold (used when it is computed once for
    several methods).
    """
    ys = np.asarray(data, float).ravel()
    if ys.size == 0:
        raise DataError("no observations")
    if t is None:
        t = rule.threshold(ys, model.sigma)
    diag = {"method": method.kind, "n": int(ys.size), "t": t}
    if t is None:
        diag["n_selected"] = 0
        diag["note"] = "no observations selected"
        return _empty(method.kind, t, diag)
    spec = SelectionSpec(t, mechanism)
    tg = TruncatedGaussian(model.sigma, t)
    index = np.nonzero(np.abs(ys) > t)[0]
    sel = ys[index]
    diag["n_selected"] = int(index.size)
    if index.size == 0:
        diag["note"] = "no observations selected"
        return _empty(method.kind, t, diag)

    kind = method.kind
    if kind == UMAU:
        sets = umau_batch(tg, sel, alpha)
    elif kind == NONSELECTIVE:
        sets = nonselective_batch(model, sel, alpha)
    elif kind == SABAYES:
        sets = sa_bayes_batch(method.prior, model, spec, sel, alpha)
    elif kind == ORACLE:
        cache = cache or SpendingCache()
        sets = invert_batch(cache.get(method.prior, model, spec, alpha), tg, sel)
    else:
        rng = rng if rng is not None else np.random.default_rng(folds.seed)
        labels = folds.assign(ys.size, rng) if fold_labels is None else np.asarray(fold_labels)
        sel_labels = labels[index]
        rows, lo, hi = [], [], []
        fits = []
        for k in range(folds.K):
            target = np.nonzero(sel_labels == k)[0]
            if target.size == 0:
                continue
            train_index = np.nonzero(labels != k)[0]
            if on_fit is not None:
                on_fit(k, train_index)
            prior_hat = estimate_prior(ys[train_index], kind, model, spec, pr_config, rng)
            if isinstance(prior_hat, TwoGroupsPrior):
                fits.append({"fold": k, "p": prior_hat.p, "tau2": prior_hat.tau2})
            else:
                fits.append({"fold": k, "atom0": prior_hat.atom0})
            spend = spending_for_prior(prior_hat, model, spec, alpha)
            part = invert_batch(spend, tg, sel[target])
            rows.append(target[part.rows])
            lo.append(part.lo)
            hi.append(part.hi)
        rows = np.concatenate(rows)
        lo = np.concatenate(lo)
        hi = np.concatenate(hi)
        order = np.lexsort((lo, rows))
        sets = SetBatch(index.size, rows[order], lo[order], hi[order])
        diag["folds"] = fits
        diag["fold_sizes"] = np.bincount(labels, minlength=folds.K).tolist()
    return MethodResult(kind, sel, index, sets, t, diag)
