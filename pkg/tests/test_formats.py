import json

import numpy as np
import pytest

from safab import formats
from safab.confset import ConfidenceSet
from safab.errors import ConfigError, DataError
from safab.gauss import GaussianModel
from safab.marginal import SelectionSpec
from safab.pr import PRConfig, pr_estimate
from safab.prior import TwoGroupsPrior, default_theta_grid
from safab.sim import MethodRow, ResultTable
from safab.spending import SpendingFunction


def test_prior_csv_roundtrip_bytes(rng):
    est = pr_estimate(rng.normal(0, 2, 500), GaussianModel(1.0), PRConfig(sweeps=1, seed=0))
    text = formats.prior_to_csv(est, {"seed": 0})
    back, cfg = formats.prior_from_csv(text)
    assert back.atom0 == est.atom0
    assert np.array_equal(back.grid, est.grid) and np.array_equal(back.density, est.density)
    assert formats.prior_to_csv(back, cfg) == text


def test_spending_csv_roundtrip_bytes():
    grid = default_theta_grid(3.0)
    spend = SpendingFunction(grid, 0.5 + 0.1 * np.tanh(grid), 0.1)
    text = formats.spending_to_csv(spend, {"t": 2.0})
    back, cfg = formats.spending_from_csv(text)
    assert back.alpha == 0.1
    assert formats.spending_to_csv(back, cfg) == text


def test_header_carries_config_hash():
    text = formats.render_csv({"b": 1, "a": [1, 2]}, ("x",), [(1.5,)])
    lines = text.splitlines()
    assert lines[1] == '# config: {"a":[1,2],"b":1}'
    assert lines[2] == "# config_sha256: " + formats.config_hash({"a": [1, 2], "b": 1})
    cfg, cols, rows = formats.parse_csv(text)
    assert cfg == {"a": [1, 2], "b": 1} and cols == ["x"] and rows == [["1.5"]]


def test_json_render():
    body = json.loads(formats.render({"k": 1}, ("a", "b"), [(1, "x")], "json"))
    assert body["columns"] == ["a", "b"] and body["rows"] == [[1, "x"]]
    with pytest.raises(ConfigError):
        formats.render({}, ("a",), [], "xml")


def test_sets_roundtrip():
    recs = [(2.5, "umau", ConfidenceSet(((0.1, 3.0),))),
            (-4.0, "safab", ConfidenceSet(((-6.0, -3.5), (-1.0, -0.5))))]
    cfg, cols, rows = formats.sets_table(recs)
    assert cols == ["y", "method", "lo_1", "hi_1", "lo_2", "hi_2", "total_length"]
    back, _ = formats.sets_from_csv(formats.render_csv(cfg, cols, rows))
    assert back == recs


def test_result_text_layout():
    rows = [MethodRow("oracle", 0.9, 0.001, 3.35, 0.002, 0.8956, 0.0004),
            MethodRow("umau", 0.9, 0.001, 3.74, 0.002, 1.0, 0.0005)]
    text = formats.result_text(ResultTable(rows, 100))
    assert "Oracle  0.9000 (0.0010)  3.3500 (0.0020)  0.8956 (0.0004)" in text
    assert text.splitlines()[-1] == "(100 batches; SEs across batches)"


def test_read_data_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,theta\n1.5,1.0\n-2.0,0.0\n")
    y, th = formats.read_data_csv(p)
    assert y.tolist() == [1.5, -2.0] and th.tolist() == [1.0, 0.0]
    p.write_text("3.0\n4.0\n")
    y, th = formats.read_data_csv(p)
    assert th is None and y.size == 2


@pytest.mark.parametrize("content", ["", "y\n", "y\n1.0\nabc\n", "y\nnan\n"])
def test_read_data_csv_errors(tmp_path, content):
    p = tmp_path / "d.csv"
    p.write_text(content)
    with pytest.raises(DataError):
        formats.read_data_csv(p)


def test_missing_prior_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        formats.read_prior_csv(tmp_path / "nope.csv")


def test_marginal_table_columns():
    from safab.marginal import selected_marginal
    m = selected_marginal(TwoGroupsPrior(0.1, 3.0), GaussianModel(1.0), SelectionSpec(2.0))
    cfg, cols, rows = formats.marginal_table(m)
    assert cols == ("y", "density", "cdf") and cfg["t"] == 2.0
    assert len(list(rows)) == m.grid_y.size
