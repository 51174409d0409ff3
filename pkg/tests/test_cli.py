import json
import subprocess
import sys

import numpy as np
import pytest

from safab import formats
from safab.cli import main


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    theta = np.where(rng.random(600) < 0.2, rng.normal(0, np.sqrt(3), 600), 0.0)
    p = tmp_path / "y.csv"
    p.write_text("y\n" + "\n".join(repr(float(v)) for v in theta + rng.standard_normal(600)) + "\n")
    return p


def test_spending_toy_has_half_at_zero(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["spending", "--preset", "toy", "--out", str(out)]) == 0
    spend, cfg = formats.read_spending_csv(out)
    k = np.argmin(np.abs(spend.theta_grid))
    assert spend.theta_grid[k] == 0.0
    assert spend.w_values[k] == pytest.approx(0.5, abs=1e-4)
    assert cfg["alpha"] == 0.1
    text = out.read_text()
    assert len(text.splitlines()) - 4 == spend.theta_grid.size


def test_spending_missing_prior_file(tmp_path, capsys):
    assert main(["spending", "--prior-csv", str(tmp_path / "none.csv")]) == 2
    assert "config error" in capsys.readouterr().err


def test_spending_needs_one_prior_source():
    assert main(["spending"]) == 2


def test_estimate_then_intervals(tmp_path, data_csv):
    prior = tmp_path / "prior.csv"
    spend = tmp_path / "w.csv"
    sets = tmp_path / "sets.csv"
    assert main(["estimate-prior", "--data", str(data_csv), "--sweeps", "2",
                 "--out", str(prior)]) == 0
    assert main(["spending", "--prior-csv", str(prior), "--out", str(spend)]) == 0
    assert main(["intervals", "--data", str(data_csv), "--spending", str(spend),
                 "--out", str(sets)]) == 0
    recs, _ = formats.sets_from_csv(sets.read_text())
    y, _ = formats.read_data_csv(data_csv)
    assert len(recs) == int(np.sum(np.abs(y) > 2))


@pytest.mark.parametrize("method", ["umau", "nonselective", "sabayes"])
def test_intervals_baselines(tmp_path, data_csv, method):
    out = tmp_path / "s.csv"
    extra = ["--preset", "toy"] if method == "sabayes" else []
    assert main(["intervals", "--data", str(data_csv), "--method", method,
                 "--out", str(out), *extra]) == 0


def test_intervals_no_selection(tmp_path):
    p = tmp_path / "y.csv"
    p.write_text("0.1\n0.2\n")
    assert main(["intervals", "--data", str(p), "--method", "umau"]) == 3


def test_simulate_shape_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--preset", "table1", "--batches", "2", "--seed", "7", "--threads", "1"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    cfg, cols, rows = formats.parse_csv(a.read_text())
    assert [r[0] for r in rows] == ["oracle", "peb", "npeb", "umau"]
    assert float(rows[3][cols.index("rel_size")]) == 1.0


def test_simulate_keeps_preset_seed_unless_given(tmp_path):
    out = tmp_path / "t.csv"
    base = ["simulate", "--preset", "table1", "--batches", "1", "--threads", "1",
            "--out", str(out)]
    assert main(base) == 0
    assert formats.parse_csv(out.read_text())[0]["seed"] == 1
    assert main(base + ["--seed", "9"]) == 0
    assert formats.parse_csv(out.read_text())[0]["seed"] == 9


def test_simulate_unknown_preset():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "table9"])
    assert exc.value.code == 2


def test_simulate_bad_scenario_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    assert main(["simulate", "--scenario", str(p)]) == 2


def test_analyze_empty_data(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    assert main(["analyze", "--data", str(p)]) == 3


def test_analyze_too_few_selected(tmp_path):
    p = tmp_path / "y.csv"
    p.write_text("\n".join(["0.1"] * 50 + ["3.0"] * 3) + "\n")
    assert main(["analyze", "--data", str(p)]) == 3


def test_analyze_small(tmp_path, data_csv):
    out = tmp_path / "sets.csv"
    assert main(["analyze", "--data", str(data_csv), "--out", str(out)]) == 0
    diag = json.loads(out.with_suffix(".json").read_text())
    assert 0.7 < diag["width_ratio"] < 1.05
    assert sum(diag["fold_sizes"]) == 600
    recs, _ = formats.sets_from_csv(out.read_text())
    assert {m for _, m, _ in recs} == {"safab_npeb", "umau"}


def test_bad_alpha_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["spending", "--preset", "toy", "--alpha", "1.5"])
    assert exc.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "safab", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.startswith("safab ")


def test_analyze_neural_like_fixture(tmp_path):
    from importlib import resources
    data = resources.files("safab").joinpath("data", "neural_like.csv")
    out = tmp_path / "sets.csv"
    assert main(["analyze", "--data", str(data), "--out", str(out)]) == 0
    diag = json.loads(out.with_suffix(".json").read_text())
    assert abs(diag["width_ratio"] - 0.887) <= 0.03
    assert abs(diag["fraction_shorter"] - 0.85) <= 0.05
