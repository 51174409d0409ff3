"""Command-line interface.

Randomness: every command derives its streams from the single ``--seed``
(scenario data, fold assignment and PR sweep order each get their own
named substream), so identical arguments give identical output bytes.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import formats
from .confset import nonselective_batch, sa_bayes_batch, umau_batch, invert_batch
from .errors import ConfigError, DataError, DomainError, SafabError
from .gauss import GaussianModel, TruncatedGaussian
from .marginal import Mechanism, SelectionSpec
from .pipeline import (NPEB, UMAU, FoldPlan, MethodSpec, SelectionRule, run_method,
                       spending_for_prior, spending_grid)
from .pr import PRConfig, pr_estimate
from .prior import TwoGroupsPrior, prior_from_dict
from .sim import PRESETS, Scenario, load_preset, run_scenario, substream
from .spending import build_spending_function
from .marginal import selected_marginal

log = logging.getLogger("safab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
STREAM_CLI_FOLDS = 10
GLOBAL_DEFAULTS = {"seed": 0, "alpha": 0.1, "sigma": 1.0}


def _emit(args, config, columns, rows):
    text = formats.render(config, columns, rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _global_config(args):
    return {"seed": args.seed, "alpha": args.alpha, "sigma": args.sigma}


def _mechanism(name):
    try:
        return Mechanism(name)
    except ValueError:
        raise ConfigError(f"unknown mechanism {name!r}") from None


def _load_prior(args):
    """Scenario prior from --preset / --prior-json, or a grid prior from --prior-csv."""
    given = [x for x in (args.preset, args.prior_json, args.prior_csv) if x]
    if len(given) != 1:
        raise ConfigError("give exactly one of --preset, --prior-json, --prior-csv")
    if args.prior_csv:
        prior, _ = formats.read_prior_csv(args.prior_csv)
        return prior, {"prior_csv": str(args.prior_csv)}
    if args.preset:
        d = load_preset(args.preset)["prior"]
    else:
        try:
            d = json.loads(Path(args.prior_json).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.prior_json}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.prior_json}: invalid JSON ({exc})") from None
        d = d.get("prior", d)
    return prior_from_dict(d), {"prior": d}


def cmd_spending(args):
    prior, pcfg = _load_prior(args)
    model = GaussianModel(args.sigma)
    spec = SelectionSpec(args.t, _mechanism(args.mechanism))
    marg = selected_marginal(prior, model, spec)
    grid = spending_grid(prior, model)
    spend = build_spending_function(marg, model, spec, args.alpha, grid, args.w_grid)
    cfg = {**_global_config(args), **pcfg, "t": args.t, "mechanism": spec.mechanism.value,
           "w_grid": args.w_grid}
    _emit(args, *formats.spending_table(spend, cfg))
    return EXIT_OK


def cmd_intervals(args):
    y, _ = formats.read_data_csv(args.data)
    model = GaussianModel(args.sigma)
    tg = TruncatedGaussian(args.sigma, args.t)
    spec = SelectionSpec(args.t, _mechanism(args.mechanism))
    sel = y[np.abs(y) > args.t]
    if sel.size == 0:
        raise DataError(f"no observation exceeds |y| > {args.t}")
    cfg = {**_global_config(args), "t": args.t, "method": args.method,
           "mechanism": spec.mechanism.value, "data": str(args.data)}
    if args.method == "safab":
        if args.spending:
            spend, scfg = formats.read_spending_csv(args.spending)
            cfg["spending"] = str(args.spending)
        else:
            prior, pcfg = _load_prior(args)
            cfg.update(pcfg)
            spend = spending_for_prior(prior, model, spec, args.alpha)
        sets = invert_batch(spend, tg, sel)
    elif args.method == "umau":
        sets = umau_batch(tg, sel, args.alpha)
    elif args.method == "nonselective":
        sets = nonselective_batch(model, sel, args.alpha)
    else:
        prior, pcfg = _load_prior(args)
        if not isinstance(prior, TwoGroupsPrior):
            raise ConfigError("sabayes needs a two-groups prior")
        cfg.update(pcfg)
        sets = sa_bayes_batch(prior, model, spec, sel, args.alpha)
    records = [(yy, args.method, cs) for yy, cs in zip(sel, sets.to_sets())]
    _emit(args, *formats.sets_table(records, cfg))
    return EXIT_OK


def cmd_estimate_prior(args):
    y, _ = formats.read_data_csv(args.data)
    model = GaussianModel(args.sigma)
    trunc = None
    if args.selected_only:
        if args.t is None:
            raise ConfigError("--selected-only needs --t")
        y = y[np.abs(y) > args.t]
        if y.size == 0:
            raise DataError(f"no observation exceeds |y| > {args.t}")
        trunc = args.t
    cfg = PRConfig(sweeps=args.sweeps, exponent_a=args.exponent, atom=not args.no_atom,
                   truncation=trunc, seed=args.seed)
    prior = pr_estimate(y, model, cfg)
    config = {**_global_config(args), "data": str(args.data), "sweeps": args.sweeps,
              "exponent_a": args.exponent, "atom": not args.no_atom,
              "truncation": trunc}
    _emit(args, *formats.prior_table(prior, config))
    return EXIT_OK


def cmd_simulate(args):
    if bool(args.preset) == bool(args.scenario):
        raise ConfigError("give exactly one of --preset or --scenario")
    if args.preset:
        d = load_preset(args.preset)
    else:
        try:
            d = json.loads(Path(args.scenario).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.scenario}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.scenario}: invalid JSON ({exc})") from None
    d = dict(d)
    d.update({k: getattr(args, k) for k in args.explicit})
    d["scale"] = args.scale
    if args.batches is not None:
        d["batches"] = args.batches
    if args.draws is not None:
        d["draws"] = args.draws
    sc = Scenario.from_dict(d)
    table = run_scenario(sc, threads=args.threads)
    _emit(args, *formats.result_table(table))
    if args.out:
        sys.stdout.write(formats.result_text(table))
    return EXIT_OK


def cmd_analyze(args):
    y, _ = formats.read_data_csv(args.data)
    model = GaussianModel(args.sigma)
    rule = SelectionRule.bh(args.bh) if args.bh is not None else SelectionRule.fixed(args.t)
    t = rule.threshold(y, args.sigma)
    n_sel = 0 if t is None else int(np.sum(np.abs(y) > t))
    if n_sel < args.folds:
        raise DataError(f"{n_sel} selected observations; need at least {args.folds} (one per fold)")
    folds = FoldPlan(args.folds)
    rng = substream(args.seed, STREAM_CLI_FOLDS)
    labels = folds.assign(y.size, rng)
    mech = _mechanism(args.mechanism)
    npeb = run_method(y, MethodSpec(NPEB), rule, mech, model, args.alpha, folds, rng=rng,
                      fold_labels=labels, t=t)
    umau = run_method(y, MethodSpec(UMAU), rule, mech, model, args.alpha, folds, t=t)
    l_sa, l_um = npeb.lengths, umau.lengths
    summary = {"t": t, "n": int(y.size), "n_selected": n_sel,
               "mean_length_safab": float(l_sa.mean()), "mean_length_umau": float(l_um.mean()),
               "width_ratio": float(l_sa.mean() / l_um.mean()),
               "fraction_shorter": float(np.mean(l_sa < l_um)),
               "folds": npeb.diagnostics.get("folds"),
               "fold_sizes": npeb.diagnostics.get("fold_sizes")}
    cfg = {**_global_config(args), "data": str(args.data), "rule": rule.to_dict(),
           "mechanism": mech.value, "folds": args.folds}
    records = []
    for yy, a, b in zip(npeb.y, npeb.sets.to_sets(), umau.sets.to_sets()):
        records.append((yy, "safab_npeb", a))
        records.append((yy, "umau", b))
    _emit(args, *formats.sets_table(records, cfg))
    diag = {"config": cfg, "config_sha256": formats.config_hash(cfg), **summary}
    diag_text = json.dumps(diag, indent=1, sort_keys=True) + "\n"
    if args.diagnostics:
        Path(args.diagnostics).write_text(diag_text)
    elif args.out:
        Path(args.out).with_suffix(".json").write_text(diag_text)
    sys.stderr.write(f"width ratio {summary['width_ratio']:.4f}; "
                     f"saFAB shorter for {summary['fraction_shorter']:.1%} of "
                     f"{n_sel} selected\n")
    return EXIT_OK


def _add_globals(p, defaults: bool):
    sup = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, **({"default": None} if defaults else sup),
                   help="64-bit seed for all random streams (default 0; simulate "
                        "keeps the scenario's own seed unless this is given)")
    p.add_argument("--alpha", type=float, **({"default": None} if defaults else sup),
                   help="miscoverage level (default 0.1)")
    p.add_argument("--sigma", type=float, **({"default": None} if defaults else sup),
                   help="known noise standard deviation (default 1.0)")
    p.add_argument("--out", **({"default": None} if defaults else sup),
                   help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"),
                   **({"default": "csv"} if defaults else sup))
    p.add_argument("--threads", type=int, **({"default": None} if defaults else sup),
                   help="worker processes (default: $SAFAB_THREADS or all cores)")


def _add_prior_source(p):
    p.add_argument("--preset", choices=PRESETS, help="use the prior of a scenario preset")
    p.add_argument("--prior-json", help='scenario prior JSON, e.g. {"kind": "two_groups", ...}')
    p.add_argument("--prior-csv", help="estimated prior CSV (from estimate-prior)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="safab", description="Selection-adjusted confidence sets tuned by a prior.",
        epilog="All randomness flows from --seed through named substreams. "
               "Exit codes: 0 ok, 2 config error, 3 data error.")
    parser.add_argument("--version", action="version", version=f"safab {__version__}")
    _add_globals(parser, True)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spending", parents=[common], help="tabulate the optimal spending function")
    _add_prior_source(p)
    p.add_argument("--t", type=float, default=2.0, help="selection threshold |y| > t")
    p.add_argument("--mechanism", default="joint", choices=[m.value for m in Mechanism])
    p.add_argument("--w-grid", type=int, default=201, help="w grid size before refinement")
    p.set_defaults(func=cmd_spending)

    p = sub.add_parser("intervals", parents=[common], help="confidence sets for observed data")
    p.add_argument("--data", required=True, help="CSV with a y column")
    p.add_argument("--method", default="safab",
                   choices=("safab", "umau", "nonselective", "sabayes"))
    p.add_argument("--spending", help="spending CSV (safab)")
    _add_prior_source(p)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--mechanism", default="joint", choices=[m.value for m in Mechanism])
    p.set_defaults(func=cmd_intervals)

    p = sub.add_parser("estimate-prior", parents=[common], help="predictive-recursion prior")
    p.add_argument("--data", required=True)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--exponent", type=float, default=0.67)
    p.add_argument("--no-atom", action="store_true", help="no point mass at zero")
    p.add_argument("--selected-only", action="store_true",
                   help="use only |y| > t with the truncated likelihood")
    p.add_argument("--t", type=float, default=None)
    p.set_defaults(func=cmd_estimate_prior)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation scenario")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the batch count")
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--draws", choices=("noise", "truncated"), default=None,
                   help="conditional scenarios: fresh noise then selection, or truncated draws")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="NPEB saFAB vs UMAU on a data set")
    p.add_argument("--data", required=True)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--bh", type=float, default=None, help="use BH at this level instead of --t")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--mechanism", default="joint", choices=[m.value for m in Mechanism])
    p.add_argument("--diagnostics", help="diagnostics JSON path (default: --out with .json)")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="safab: %(message)s")
    # Remember which globals were given so scenario files keep their own values otherwise.
    args.explicit = {k for k in GLOBAL_DEFAULTS if getattr(args, k) is not None}
    for k, v in GLOBAL_DEFAULTS.items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    if not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    if not args.sigma > 0:
        parser.error("--sigma must be positive")
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        sys.stderr.write(f"safab: config error: {exc}\n")
        return EXIT_CONFIG
    except DataError as exc:
        sys.stderr.write(f"safab: data error: {exc}\n")
        return EXIT_DATA
    except SafabError as exc:
        sys.stderr.write(f"safab: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
