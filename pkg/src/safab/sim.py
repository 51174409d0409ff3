"""Monte Carlo scenario engine: batched coverage and size studies.

Random streams are derived from one integer seed as
``SeedSequence(seed, spawn_key=(stream, batch))`` so that results do not
depend on how batches are spread over worker processes.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Sequence

import numpy as np

from .confset import invert_batch, nonselective_batch, sa_bayes_batch, umau_batch
from .errors import ConfigError
from .gauss import GaussianModel, TruncatedGaussian, trunc_sample
from .marginal import Mechanism, SelectionSpec
from .pipeline import (METHOD_KINDS, NONSELECTIVE, ORACLE, SABAYES, UMAU, FoldPlan,
                       MethodSpec, SelectionRule, SpendingCache, run_method, spending_for_prior)
from .prior import ScenarioPrior, TwoGroupsPrior, prior_from_dict, sample_theta

log = logging.getLogger(__name__)

STREAM_DATA, STREAM_FOLDS, STREAM_THETA, STREAM_PROFILE = 0, 1, 2, 3
PRESETS = ("toy", "table1", "table2", "table3", "table4", "table5")


def substream(seed: int, stream: int, batch: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, batch)))


@dataclass(frozen=True)
class Scenario:
    prior: ScenarioPrior
    rule: SelectionRule
    mechanism: Mechanism = Mechanism.JOINT
    sigma: float = 1.0
    alpha: float = 0.1
    batches: int = 1000
    n_per_batch: int = 2000
    methods: tuple = (ORACLE, "peb", "npeb", UMAU)
    seed: int = 0
    scale: float = 1.0
    folds: int = 5
    name: str = "custom"
    draws: str = "noise"   # conditional only: "noise" or "truncated"

    def __post_init__(self):
        if self.batches < 1 or self.n_per_batch < 1:
            raise ConfigError("batches and n_per_batch must be positive")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        bad = [m for m in self.methods if m not in METHOD_KINDS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if self.mechanism is Mechanism.CONDITIONAL and self.rule.kind != "fixed":
            raise ConfigError("the conditional mechanism needs a fixed threshold")
        if self.draws not in ("noise", "truncated"):
            raise ConfigError(f"draws must be 'noise' or 'truncated', got {self.draws!r}")

    @property
    def n_batches(self) -> int:
        return max(1, int(round(self.batches * self.scale)))

    @property
    def model(self):
        return GaussianModel(self.sigma)

    def method_specs(self) -> List[MethodSpec]:
        return [MethodSpec(m, self.prior if m in (ORACLE, SABAYES) else None)
                for m in self.methods]

    def to_dict(self):
        return {"name": self.name, "prior": self.prior.to_dict(), "rule": self.rule.to_dict(),
                "mechanism": self.mechanism.value, "sigma": self.sigma, "alpha": self.alpha,
                "batches": self.batches, "n_per_batch": self.n_per_batch,
                "methods": list(self.methods), "seed": self.seed, "scale": self.scale,
                "folds": self.folds, "draws": self.draws}

    @classmethod
    def from_dict(cls, d: dict):
        try:
            return cls(prior=prior_from_dict(d["prior"]),
                       rule=SelectionRule(d["rule"]["kind"], float(d["rule"]["value"])),
                       mechanism=Mechanism(d.get("mechanism", "joint")),
                       sigma=float(d.get("sigma", 1.0)), alpha=float(d.get("alpha", 0.1)),
                       batches=int(d.get("batches", 1000)),
                       n_per_batch=int(d.get("n_per_batch", 2000)),
                       methods=tuple(d.get("methods", (ORACLE, "peb", "npeb", UMAU))),
                       seed=int(d.get("seed", 0)), scale=float(d.get("scale", 1.0)),
                       folds=int(d.get("folds", 5)), name=str(d.get("name", "custom")),
                       draws=str(d.get("draws", "noise")))
        except KeyError as exc:
            raise ConfigError(f"scenario missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario: {exc}") from None


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("safab").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def preset_scenario(name: str, **overrides) -> Scenario:
    d = load_preset(name)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return Scenario.from_dict(d)


# --- results ----------------------------------------------------------------

@dataclass(frozen=True)
class MethodRow:
    method: str
    coverage: float
    coverage_se: float
    size: float
    size_se: float
    rel_size: float
    rel_size_se: float


@dataclass(eq=False)
class ResultTable:
    """One row per method; SEs are across-batch standard errors of batch means."""

    rows: List[MethodRow]
    n_batches: int
    empty_batches: int = 0
    mean_selected: float = 0.0
    config: dict = field(default_factory=dict)

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def _mean_se(x):
    x = np.asarray(x, float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(np.mean(x)), se


def summarize(method_names: Sequence[str], coverage, size, n_selected, config=None) -> ResultTable:
    """Aggregate per-batch means ``coverage[b, j]`` and ``size[b, j]``."""
    coverage = np.asarray(coverage, float)
    size = np.asarray(size, float)
    n_selected = np.asarray(n_selected)
    keep = n_selected > 0
    stats = [(_mean_se(coverage[keep, j]), _mean_se(size[keep, j]))
             for j in range(len(method_names))]
    base = None
    if UMAU in method_names:
        base = stats[list(method_names).index(UMAU)][1][0]
    rows = []
    for name, ((c, c_se), (s, s_se)) in zip(method_names, stats):
        rel, rel_se = (s / base, s_se / base) if base else (float("nan"), float("nan"))
        rows.append(MethodRow(name, c, c_se, s, s_se, rel, rel_se))
    return ResultTable(rows, int(coverage.shape[0]), int(np.sum(~keep)),
                       float(np.mean(n_selected)) if n_selected.size else 0.0, config or {})


# --- batch execution --------------------------------------------------------

def _fixed_thetas(sc: Scenario):
    return sample_theta(sc.prior, sc.n_per_batch, substream(sc.seed, STREAM_THETA))


def draw_batch(sc: Scenario, b: int, thetas=None):
    """``(theta, y)`` for batch ``b``.

    Joint: fresh ``theta`` each batch and ordinary Gaussian noise.
    Conditional: the scenario's ``theta`` is fixed across batches.  With
    ``draws="noise"`` each batch adds fresh Gaussian noise and selection then
    keeps ``|y| > t``; with ``draws="truncated"`` every unit gets a draw from
    the truncated law, so all of them are selected.
    """
    rng = substream(sc.seed, STREAM_DATA, b)
    if sc.mechanism is Mechanism.JOINT:
        theta = sample_theta(sc.prior, sc.n_per_batch, rng)
        return theta, theta + sc.sigma * rng.standard_normal(theta.size)
    theta = _fixed_thetas(sc) if thetas is None else thetas
    if sc.draws == "noise":
        return theta, theta + sc.sigma * rng.standard_normal(theta.size)
    return theta, trunc_sample(TruncatedGaussian(sc.sigma, sc.rule.value), theta, rng=rng)


_CACHE = SpendingCache()


def run_batch(sc: Scenario, b: int, thetas=None):
    """Per-method (coverage, mean size) for one batch plus its selection count."""
    theta, y = draw_batch(sc, b, thetas)
    model = sc.model
    t = sc.rule.threshold(y, sc.sigma)
    folds = FoldPlan(sc.folds)
    labels = None
    cov = np.full(len(sc.methods), np.nan)
    size = np.full(len(sc.methods), np.nan)
    if t is None or not np.any(np.abs(y) > t):
        return cov, size, 0
    n_sel = int(np.sum(np.abs(y) > t))
    fold_rng = substream(sc.seed, STREAM_FOLDS, b)
    labels = folds.assign(y.size, fold_rng)
    for j, spec in enumerate(sc.method_specs()):
        res = run_method(y, spec, sc.rule, sc.mechanism, model, sc.alpha, folds,
                         rng=fold_rng, fold_labels=labels, t=t, cache=_CACHE)
        cov[j] = float(np.mean(res.coverage(theta)))
        size[j] = float(np.mean(res.lengths))
    return cov, size, n_sel


def _run_range(sc: Scenario, batches):
    thetas = _fixed_thetas(sc) if sc.mechanism is Mechanism.CONDITIONAL else None
    return [run_batch(sc, b, thetas) for b in batches]


def default_threads():
    env = os.environ.get("SAFAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else (os.cpu_count() or 1))


def run_scenario(sc: Scenario, threads: Optional[int] = None, progress=None) -> ResultTable:
    """Run every batch and aggregate; bit-identical for a given scenario and seed."""
    nb = sc.n_batches
    threads = default_threads() if threads is None else max(1, int(threads))
    chunks = [list(range(nb))[i::threads] for i in range(min(threads, nb))]
    if len(chunks) <= 1:
        out = []
        thetas = _fixed_thetas(sc) if sc.mechanism is Mechanism.CONDITIONAL else None
        for b in range(nb):
            out.append(run_batch(sc, b, thetas))
            if progress:
                progress(b + 1, nb)
        by_batch = out
    else:
        with ProcessPoolExecutor(len(chunks)) as ex:
            parts = list(ex.map(_run_range, [sc] * len(chunks), chunks))
        by_batch = [None] * nb
        for idx, part in zip(chunks, parts):
            for b, r in zip(idx, part):
                by_batch[b] = r
    cov = np.array([r[0] for r in by_batch])
    size = np.array([r[1] for r in by_batch])
    nsel = np.array([r[2] for r in by_batch])
    return summarize(list(sc.methods), cov, size, nsel, sc.to_dict())


# --- toy example and coverage profiles -------------------------------------

@dataclass(eq=False)
class ToySummary:
    y: np.ndarray                 # selected observations
    safab_length: np.ndarray
    umau_length: np.ndarray
    ratio: float                  # mean saFAB length / mean UMAU length
    fraction_shorter: float
    crossover: float              # smallest y > t beyond which saFAB is wider
    curve_y: np.ndarray
    curve_safab: np.ndarray
    curve_umau: np.ndarray


def run_toy_example(seed: int = 0, p: float = 0.1, tau2: float = 3.0, t: float = 2.0,
                    n: int = 10_000, alpha: float = 0.1, sigma: float = 1.0) -> ToySummary:
    prior = TwoGroupsPrior(p, tau2)
    model = GaussianModel(sigma)
    spec = SelectionSpec(t, Mechanism.JOINT)
    tg = TruncatedGaussian(sigma, t)
    rng = substream(seed, STREAM_DATA)
    theta = sample_theta(prior, n, rng)
    y = theta + sigma * rng.standard_normal(n)
    y = y[np.abs(y) > t]
    spend = spending_for_prior(prior, model, spec, alpha)
    sa = invert_batch(spend, tg, y).lengths()
    um = umau_batch(tg, y, alpha).lengths()
    cy = np.round(np.arange(t + 0.01, t + 6.0 * sigma, 0.01 * sigma), 10)
    csa = invert_batch(spend, tg, cy).lengths()
    cum = umau_batch(tg, cy, alpha).lengths()
    wider = csa > cum
    # First point after which saFAB stays wider on the rest of the curve.
    tail_wider = np.flip(np.logical_and.accumulate(np.flip(wider)))
    crossover = float(cy[np.argmax(tail_wider)]) if tail_wider.any() else float("nan")
    return ToySummary(y, sa, um, float(sa.mean() / um.mean()), float(np.mean(sa < um)),
                      crossover, cy, csa, cum)


@dataclass(eq=False)
class CoverageProfile:
    method: str
    theta: np.ndarray
    coverage: np.ndarray
    se: np.ndarray
    draws: int


def coverage_profile(method: str, prior: ScenarioPrior, theta_list, t: float = 2.0,
                     mechanism: Mechanism = Mechanism.JOINT, sigma: float = 1.0,
                     alpha: float = 0.1, draws: int = 100_000, seed: int = 0,
                     spend=None) -> CoverageProfile:
    """Conditional coverage at fixed ``theta`` over draws from the truncated law.

    ``method`` is one of ``oracle`` (saFAB with the given prior), ``umau``,
    ``nonselective`` or ``sabayes``.  ``spend`` overrides the oracle
    spending function (for example one built from a different prior).
    """
    model = GaussianModel(sigma)
    spec = SelectionSpec(t, mechanism)
    tg = TruncatedGaussian(sigma, t)
    if method == ORACLE and spend is None:
        spend = spending_for_prior(prior, model, spec, alpha)
    theta_list = np.atleast_1d(np.asarray(theta_list, float))
    cov = np.empty(theta_list.size)
    for i, th in enumerate(theta_list):
        y = trunc_sample(tg, th, draws, substream(seed, STREAM_PROFILE, i))
        if method == ORACLE:
            sets = invert_batch(spend, tg, y)
        elif method == UMAU:
            sets = umau_batch(tg, y, alpha)
        elif method == NONSELECTIVE:
            sets = nonselective_batch(model, y, alpha)
        elif method == SABAYES:
            sets = sa_bayes_batch(prior, model, spec, y, alpha)
        else:
            raise ConfigError(f"coverage profile not available for {method!r}")
        cov[i] = float(np.mean(sets.covers(np.full(draws, th))))
    return CoverageProfile(method, theta_list, cov, np.sqrt(cov * (1 - cov) / draws), draws)
