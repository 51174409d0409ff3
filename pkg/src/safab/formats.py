"""CSV/JSON readers and writers for priors, spending functions, sets and tables.

Every CSV starts with ``#`` comment lines carrying the tool version, the
resolved configuration as canonical JSON, and a hash of that JSON.  Floats
are written with ``repr`` so reading and re-writing is byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .prior import GridPrior
from .spending import SpendingFunction


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "value"):
        return x.value
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def header_lines(config: dict) -> List[str]:
    return [f"# safab {__version__}",
            f"# config: {canonical_json(config)}",
            f"# config_sha256: {config_hash(config)}"]


def render_csv(config: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for line in header_lines(config):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def render_json(config: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    body = {"safab": __version__, "config": config, "config_sha256": config_hash(config),
            "columns": list(columns),
            "rows": [[_num_or_str(x) for x in r] for r in rows]}
    return json.dumps(body, indent=1, default=_jsonable) + "\n"


def _num_or_str(x):
    if x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def render(config, columns, rows, format: str = "csv") -> str:
    rows = list(rows)
    if format == "csv":
        return render_csv(config, columns, rows)
    if format == "json":
        return render_json(config, columns, rows)
    raise ConfigError(f"unknown output format {format!r}")


def parse_csv(text: str):
    """Return ``(config, columns, rows)``; rows are lists of strings."""
    config = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            if line.startswith("# config: "):
                try:
                    config = json.loads(line[len("# config: "):])
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"corrupt config header: {exc}") from None
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise DataError("no rows found")
    reader = csv.reader(body)
    columns = next(reader)
    return config, columns, [r for r in reader]


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None


# --- prior ------------------------------------------------------------------

PRIOR_COLUMNS = ("theta", "density")


def prior_table(prior: GridPrior, config: Optional[dict] = None):
    cfg = dict(config or {})
    cfg["atom0"] = prior.atom0
    return cfg, PRIOR_COLUMNS, zip(prior.grid, prior.density)


def prior_to_csv(prior: GridPrior, config: Optional[dict] = None) -> str:
    return render_csv(*prior_table(prior, config))


def prior_from_csv(text: str):
    """``(GridPrior, config)`` from a prior CSV; ``atom0`` comes from the header."""
    config, cols, rows = parse_csv(text)
    if tuple(cols[:2]) != PRIOR_COLUMNS:
        raise ConfigError(f"prior CSV must have columns theta,density (got {cols})")
    try:
        arr = np.array([[float(a), float(b)] for a, b, *_ in rows])
        return GridPrior(arr[:, 0], arr[:, 1], float(config.get("atom0", 0.0))), config
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad prior CSV: {exc}") from None


def read_prior_csv(path):
    return prior_from_csv(_read_text(path))


# --- spending function ------------------------------------------------------

SPENDING_COLUMNS = ("theta", "w")


def spending_table(spend: SpendingFunction, config: Optional[dict] = None):
    cfg = dict(config or {})
    cfg["alpha"] = spend.alpha
    return cfg, SPENDING_COLUMNS, zip(spend.theta_grid, spend.w_values)


def spending_to_csv(spend: SpendingFunction, config: Optional[dict] = None) -> str:
    return render_csv(*spending_table(spend, config))


def spending_from_csv(text: str):
    config, cols, rows = parse_csv(text)
    if tuple(cols[:2]) != SPENDING_COLUMNS:
        raise ConfigError(f"spending CSV must have columns theta,w (got {cols})")
    if "alpha" not in config:
        raise ConfigError("spending CSV header lacks alpha")
    try:
        arr = np.array([[float(a), float(b)] for a, b, *_ in rows])
        return SpendingFunction(arr[:, 0], arr[:, 1], float(config["alpha"])), config
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad spending CSV: {exc}") from None


def read_spending_csv(path):
    return spending_from_csv(_read_text(path))


# --- marginal ---------------------------------------------------------------

def marginal_table(marg, config: Optional[dict] = None):
    cfg = dict(config or {})
    cfg.update({"t": marg.t, "mechanism": marg.mechanism.value})
    return cfg, ("y", "density", "cdf"), zip(marg.grid_y, marg.density, marg.cdf)


# --- confidence sets --------------------------------------------------------

def sets_table(records, config: Optional[dict] = None):
    """``records`` are ``(y, method, ConfidenceSet)`` triples.

    Columns are ``y, method, lo_1, hi_1, ..., lo_K, hi_K, total_length``
    with K the largest number of intervals; unused cells are empty.
    """
    records = list(records)
    k = max((len(cs) for _, _, cs in records), default=1) or 1
    cols = ["y", "method"]
    for i in range(1, k + 1):
        cols += [f"lo_{i}", f"hi_{i}"]
    cols.append("total_length")
    rows = []
    for y, method, cs in records:
        flat = [v for iv in cs.intervals for v in iv]
        flat += [None] * (2 * k - len(flat))
        rows.append([float(y), method, *flat, cs.length])
    return dict(config or {}), cols, rows


def sets_from_csv(text: str):
    from .confset import ConfidenceSet
    config, cols, rows = parse_csv(text)
    out = []
    for r in rows:
        vals = [float(v) for v in r[2:-1] if v != ""]
        out.append((float(r[0]), r[1], ConfidenceSet(tuple(zip(vals[0::2], vals[1::2])))))
    return out, config


# --- result tables ----------------------------------------------------------

TABLE_COLUMNS = ("method", "coverage", "coverage_se", "size", "size_se",
                 "rel_size", "rel_size_se")


def result_table(table, config: Optional[dict] = None):
    cfg = dict(config if config is not None else table.config)
    cfg["n_batches_run"] = table.n_batches
    cfg["empty_batches"] = table.empty_batches
    rows = [(r.method, r.coverage, r.coverage_se, r.size, r.size_se, r.rel_size, r.rel_size_se)
            for r in table.rows]
    return cfg, TABLE_COLUMNS, rows


def result_text(table) -> str:
    """Aligned text in the usual ``value (SE)`` layout."""
    from .pipeline import METHOD_LABELS
    head = ("Method", "Coverage", "Average size", "Relative average size")
    body = [(METHOD_LABELS.get(r.method, r.method),
             f"{r.coverage:.4f} ({r.coverage_se:.4f})",
             f"{r.size:.4f} ({r.size_se:.4f})",
             f"{r.rel_size:.4f} ({r.rel_size_se:.4f})") for r in table.rows]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append(f"({table.n_batches} batches; SEs across batches)")
    return "\n".join(lines) + "\n"


# --- observation data -------------------------------------------------------

def read_data_csv(path):
    """``(y, theta_or_None)`` from a one- or two-column CSV (optional header)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    ys, thetas = [], []
    rows = [r for r in csv.reader(l for l in text.splitlines()
                                   if l.strip() and not l.startswith("#"))]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    for i, r in enumerate(rows):
        try:
            ys.append(float(r[0]))
            if len(r) > 1 and r[1].strip():
                thetas.append(float(r[1]))
        except ValueError:
            raise DataError(f"{path}: row {i + 1} is not numeric: {r}") from None
    if not ys:
        raise DataError(f"{path}: no observations")
    y = np.array(ys)
    if not np.all(np.isfinite(y)):
        raise DataError(f"{path}: non-finite values")
    theta = np.array(thetas) if len(thetas) == len(ys) else None
    return y, theta
