import json

import pytest

from src.core.errors import ConfigError
from src.services.settings import ScenarioSettings, coerce
from src.utils.constants import DEFAULT_SETTINGS, SCENARIOS_DIR


def test_defaults_are_loaded():
    s = ScenarioSettings()
    assert s.get_all() == DEFAULT_SETTINGS


@pytest.mark.parametrize("key, raw, expected", [
    ("metric.mass", "2.5", 2.5),
    ("exhaustion.count", "6", 6),
    ("exhaustion.count", 6.0, 6),
    ("mass.log_term", "yes", True),
    ("mass.log_term", "off", False),
    ("region.params", "  radius=2  ", "radius=2"),
    ("rng.seed", str(2**64 - 1), 2**64 - 1),
])
def test_coerce_converts_to_default_types(key, raw, expected):
    assert coerce(key, raw) == expected


@pytest.mark.parametrize("key, raw", [
    ("metric.colour", "red"),
    ("metric.mass", "heavy"),
    ("metric.mass", "-1"),
    ("exhaustion.count", "2"),
    ("exhaustion.count", 3.5),
    ("mass.log_term", "maybe"),
    ("metric.kind", "kerr"),
    ("solver.outer_bc", "periodic"),
    ("metric.dimension", "6"),
])
def test_coerce_rejects_invalid_values(key, raw):
    with pytest.raises(ConfigError):
        coerce(key, raw)


def test_config_file_then_overrides(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(
        "# comment\nmetric.kind = euclidean\nmetric.mass = 3\nregion.params = radius=10; center=0.5,0,0\n",
        encoding="utf-8",
    )
    s = ScenarioSettings(config_path=path, overrides={"metric.mass": 4.0})
    assert s.get("metric.kind") == "euclidean"
    assert s.get("metric.mass") == 4.0
    assert s.get("region.params") == "radius=10; center=0.5,0,0"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioSettings(config_path=tmp_path / "missing.cfg")


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("metric.spin = 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        ScenarioSettings(config_path=path)


@pytest.mark.parametrize("path", sorted(SCENARIOS_DIR.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    ScenarioSettings(config_path=path)


def test_config_hash_ignores_output_dir():
    a = ScenarioSettings(overrides={"output.dir": "/tmp/a"})
    b = ScenarioSettings(overrides={"output.dir": "/tmp/b"})
    c = ScenarioSettings(overrides={"metric.mass": 2.0})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_save_writes_resolved_json(tmp_path):
    s = ScenarioSettings(overrides={"metric.mass": 2.0})
    path = s.save(tmp_path / "run" / "config.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["metric.mass"] == 2.0
    assert set(data) == set(DEFAULT_SETTINGS)


def test_derived_copy_leaves_the_original():
    s = ScenarioSettings(overrides={"metric.mass": 2.0})
    point = s.derived("metric.mass", "0.5")
    assert point.get("metric.mass") == 0.5
    assert s.get("metric.mass") == 2.0


def test_set_validates_and_reset_restores():
    s = ScenarioSettings()
    s.set("solver.grid_n", 64)
    assert s.get("solver.grid_n") == 64
    with pytest.raises(ConfigError):
        s.set("solver.grid_n", 8)
    s.reset_to_defaults()
    assert s.get("solver.grid_n") == DEFAULT_SETTINGS["solver.grid_n"]
