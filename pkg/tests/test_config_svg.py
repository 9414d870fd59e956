import json

import numpy as np
import pytest

from sirdx import svg
from sirdx.config import SEED_OFFSETS, ConfigError, RunConfig, load_config
from sirdx.dataset import ASSUMPTION_RANGES, PAPER_RANGES


def test_defaults_need_no_file():
    cfg = load_config()
    assert cfg.param_ranges() == PAPER_RANGES
    assert cfg.integrator_config().dt == 0.01
    assert cfg.mlp_config().neurons_per_hidden == 32
    assert cfg.k_folds == 10 and cfg.n == 1000


def test_seed_offsets_distinct():
    cfg = RunConfig(seed=10)
    seeds = [cfg.seed_for(s) for s in SEED_OFFSETS]
    assert len(set(seeds)) == len(seeds) and min(seeds) == 10
    assert cfg.train_config().seed == 10 + SEED_OFFSETS["train"]


def test_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "integrator": {"dt": 0.02}, "ranges": "assumptions"}))
    cfg = load_config(path, **{"integrator.t_max": 500.0, "seed": None})
    assert cfg.seed == 4
    assert cfg.integrator_config().dt == 0.02 and cfg.integrator_config().t_max == 500.0
    assert cfg.param_ranges() == ASSUMPTION_RANGES


def test_explicit_ranges_merge_over_default():
    cfg = RunConfig(ranges={"kappa0": [0.001, 0.001]})
    assert cfg.param_ranges().kappa0 == (0.001, 0.001)
    assert cfg.param_ranges().alpha == PAPER_RANGES.alpha


@pytest.mark.parametrize("doc", [
    '{"unknown": 1}', '{"integrator": {"dt": -1}}', '{"ranges": "mystery"}', "[1, 2]", "{bad json",
    '{"mlp": {"activation": "softplus"}}', '{"k_folds": 1}',
])
def test_invalid_configs(tmp_path, doc):
    path = tmp_path / "c.json"
    path.write_text(doc)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


# ---------------------------------------------------------------- SVG


def _check_svg(path):
    text = path.read_text()
    assert text.startswith('<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600"')
    assert text.rstrip().endswith("</svg>")
    return text


def test_charts_are_deterministic(tmp_path):
    x = np.linspace(0, 10, 5000)
    makers = {
        "line": lambda p: svg.line_chart(p, [("a", x, np.sin(x)), ("b", x, np.cos(x))], "t", "x", "y",
                                         dashed=["b"], colors=[0, 0]),
        "scatter": lambda p: svg.scatter_chart(p, [("g", x[:50], x[:50] * 1.1)], "s"),
        "hist": lambda p: svg.histogram(p, np.sin(x), bins=20, title="h"),
        "bar": lambda p: svg.bar_chart(p, ["u", "v"], {"s1": [0.2, -0.01], "st": [0.3, 0.1]}, "b"),
        "matrix": lambda p: svg.matrix_chart(p, np.array([[5, 1], [2, 7]]), "m"),
    }
    for name, make in makers.items():
        a, b = tmp_path / f"{name}1.svg", tmp_path / f"{name}2.svg"
        make(a)
        make(b)
        _check_svg(a)
        assert a.read_bytes() == b.read_bytes()
    line = (tmp_path / "line1.svg").read_text()
    assert line.count("stroke-dasharray") == 1
    assert line.count("<polyline") == 2


def test_labels_are_escaped(tmp_path):
    svg.bar_chart(tmp_path / "e.svg", ["a<b"], {"x&y": [1.0]}, title="<t>")
    text = _check_svg(tmp_path / "e.svg")
    assert "a&lt;b" in text and "x&amp;y" in text and "&lt;t&gt;" in text
