import json
from fractions import Fraction as F

import pytest

from ietmix import config as cfgmod
from ietmix.config import ConfigError


def test_presets_validate_and_build():
    for name in ("golden-asym", "golden-sym"):
        cfg = cfgmod.preset_config(name)
        iet = cfgmod.build_iet(cfg)
        roof = cfgmod.build_roof(cfg, iet)
        assert roof.singularities == (iet.breakpoints[1],)
        g, h = cfgmod.build_observables(cfg)
        assert abs(g.integral()) < 1e-15
    flow = cfgmod.build_flow(cfgmod.preset_config("arnold-torus"))
    assert len(flow.saddles()) == 1


def test_unknown_preset():
    with pytest.raises(ConfigError):
        cfgmod.preset_config("golden")


@pytest.mark.parametrize(
    "cfg, where",
    [
        ({"iet": {"permutation": [2, 1], "lengths": ["1/2", "1/2"]}, "extra": 1}, "<root>"),
        ({"roof": {"C_plus": [1]}}, "roof"),
        ({"run": {"seed": -1}}, "run/seed"),
        ({"dc": {"min_spacing": 0}}, "dc/min_spacing"),
    ],
)
def test_schema_errors_name_the_path(cfg, where):
    with pytest.raises(ConfigError, match=where):
        cfgmod.validate(cfg)


def test_missing_sections():
    with pytest.raises(ConfigError):
        cfgmod.build_iet({})
    with pytest.raises(ConfigError):
        cfgmod.build_roof({}, None)
    with pytest.raises(ConfigError):
        cfgmod.build_observables({})
    with pytest.raises(ConfigError):
        cfgmod.build_flow({})


def test_explicit_iet_and_defaults():
    cfg = cfgmod.validate({"iet": {"permutation": [3, 2, 1], "lengths": ["2/7", "3/7", "2/7"]},
                           "roof": {"C_plus": [1, 1], "C_minus": [2, 1]}, "dc": {"tau": 1.4}})
    iet = cfgmod.build_iet(cfg)
    assert iet.lengths == (F(2, 7), F(3, 7), F(2, 7))
    full = cfgmod.with_defaults(cfg)
    assert full["dc"]["tau"] == 1.4 and full["dc"]["min_spacing"] == 2
    assert full["run"]["seed"] == 0 and full["run"]["samples"] == 100_000
    assert "run" not in cfg


def test_hash_is_order_independent():
    a = {"b": 1, "a": [1, 2]}
    b = {"a": [1, 2], "b": 1}
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
    assert cfgmod.config_hash(a) != cfgmod.config_hash({"a": [2, 1], "b": 1})


def test_load_and_config_dir(tmp_path, monkeypatch):
    (tmp_path / "exp.json").write_text(json.dumps({"preset": "golden-asym"}))
    monkeypatch.setenv(cfgmod.CONFIG_DIR_ENV, str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert cfgmod.load("exp.json") == {"preset": "golden-asym"}
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "absent.json")
