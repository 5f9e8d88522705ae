import json

import pandas as pd
import pytest

from src.core.capacity import CapacityEstimate
from src.core.errors import ConfigError
from src.core.manifold import EuclideanMetric, MultiCenterMetric, RadialConformalMetric, SchwarzschildMetric
from src.core.regions import Ball, Ellipsoid
from src.services.runner import (
    backend_disagreements,
    capacity_backends,
    metric_from_settings,
    pool_map,
    region_from_settings,
    run_capacity,
    run_command,
    run_convergence,
    run_deficit,
    run_sweep,
    sweep_points,
)
from src.services.storage import RunManifest
from src.utils.constants import (
    CONFIG_SNAPSHOT_FILE,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    RECORDS_FILE,
    REPORT_FILE,
    SWEEP_FILE,
)


def _configure(s, **values):
    for key, value in values.items():
        s.set(key.replace("__", "."), value)
    return s


def _limit(summary: str) -> float:
    return float(summary.split()[0].split("=")[1])


# ===========================================
# SETTINGS -> OBJECTS
# ===========================================
def test_metric_kinds(scenario):
    assert isinstance(metric_from_settings(scenario), SchwarzschildMetric)
    scenario.set("metric.kind", "euclidean")
    assert isinstance(metric_from_settings(scenario), EuclideanMetric)

    _configure(scenario, metric__kind="radial", metric__profile_coeffs="0.5")
    assert isinstance(metric_from_settings(scenario), RadialConformalMetric)

    _configure(scenario, metric__kind="multicenter", metric__centers="-1,0,0; 1,0,0", metric__masses="0.5,0.5")
    model = metric_from_settings(scenario)
    assert isinstance(model, MultiCenterMetric)
    assert model.adm_mass() == pytest.approx(1.0)


@pytest.mark.parametrize("values", [
    {"metric.kind": "radial"},
    {"metric.kind": "radial", "metric.profile_coeffs": "a,b"},
    {"metric.kind": "multicenter", "metric.centers": "1,0", "metric.masses": "1"},
    {"metric.kind": "multicenter", "metric.centers": "0,0,0", "metric.masses": "1,2"},
])
def test_bad_metric_settings(scenario, values):
    scenario.update(values)
    with pytest.raises(ConfigError):
        metric_from_settings(scenario)


def test_region_errors_become_config_errors(scenario):
    scenario.set("region.params", "radius=1;height=2")
    with pytest.raises(ConfigError):
        region_from_settings(scenario)


def test_auto_backends_for_schwarzschild_ball(scenario):
    names = [b.name for b in capacity_backends(scenario, SchwarzschildMetric(mass=1.0), Ball(radius=10.0))]
    assert names == ["radial-quadrature", "conformal-shift"]


def test_auto_backends_for_euclidean_ellipsoid(scenario):
    names = [b.name for b in capacity_backends(scenario, EuclideanMetric(), Ellipsoid(axes=(2.0, 1.0, 1.0)))]
    assert names == ["conformal-shift", "euclidean-closed-form"]


def test_unknown_backend_rejected(scenario):
    scenario.set("capacity.backends", "radial-quadrature,monte-carlo")
    with pytest.raises(ConfigError, match="monte-carlo"):
        capacity_backends(scenario, SchwarzschildMetric(mass=1.0), Ball(radius=10.0))


def test_pool_map_keeps_order():
    items = list(range(20))
    assert pool_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert pool_map(lambda x: x + 1, items, threads=1) == [x + 1 for x in items]


def test_backend_disagreements(scenario):
    a = CapacityEstimate(10.5, "radial-quadrature", 1e-10)
    b = CapacityEstimate(10.5 + 1e-9, "conformal-shift", 1e-12)
    c = CapacityEstimate(11.0, "grid-variational", 0.01)
    assert backend_disagreements([a, b], scenario) == []
    messages = backend_disagreements([a, c], scenario)
    assert len(messages) == 1
    assert "disagree" in messages[0]


# ===========================================
# COMMANDS
# ===========================================
def test_run_capacity(scenario, tmp_path):
    scenario.set("region.params", "radius=10")
    outcome = run_capacity(scenario, tmp_path, threads=2)
    assert outcome.exit_code == EXIT_OK
    assert len(outcome.lines) == 2
    assert outcome.summary.startswith("10.5")
    report = json.loads((tmp_path / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["agree"] is True
    assert [e["method"] for e in report["estimates"]] == ["radial-quadrature", "conformal-shift"]


def test_run_deficit(scenario, tmp_path):
    scenario.set("region.params", "radius=10")
    outcome = run_deficit(scenario, tmp_path)
    assert outcome.exit_code == EXIT_OK
    assert outcome.lines[0].startswith("volume radius")
    assert (tmp_path / RECORDS_FILE).exists()
    record = json.loads((tmp_path / REPORT_FILE).read_text(encoding="utf-8"))["record"]
    assert record["capacity"] == pytest.approx(10.5, rel=1e-9)
    assert record["method"] == "radial-quadrature"


def test_run_deficit_without_capacity_is_a_solver_failure(scenario, tmp_path):
    _configure(scenario, region__params="radius=10", capacity__backends="euclidean-closed-form")
    outcome = run_deficit(scenario, tmp_path)
    assert outcome.exit_code == EXIT_SOLVER_FAILURE
    assert any(line.startswith("error capacity") for line in outcome.lines)
    assert (tmp_path / REPORT_FILE).exists()


def test_run_convergence_recovers_mass(scenario, tmp_path):
    outcome = run_convergence(scenario, tmp_path)
    assert outcome.exit_code == EXIT_OK
    assert _limit(outcome.summary) == pytest.approx(1.0, abs=0.01)
    assert "adm=1" in outcome.summary
    assert (tmp_path / RECORDS_FILE).exists()
    assert len(pd.read_csv(tmp_path / RECORDS_FILE)) == 4


def test_run_convergence_flags_divergent_family(scenario, tmp_path):
    _configure(
        scenario, metric__kind="euclidean", region__shape="ellipsoid", region__params="axes=2,1,1",
        exhaustion__rho0=10.0, exhaustion__count=6,
    )
    outcome = run_convergence(scenario, tmp_path)
    assert outcome.summary.endswith(" diverges")


def test_sweep_points(scenario):
    _configure(scenario, sweep__key="metric.mass", sweep__values="0.5, 1,2")
    points = sweep_points(scenario)
    assert [p.get("metric.mass") for p in points] == [0.5, 1.0, 2.0]
    assert scenario.get("metric.mass") == 1.0


@pytest.mark.parametrize("key, values", [
    ("", "1,2"),
    ("metric.colour", "1,2"),
    ("sweep.values", "1,2"),
    ("output.dir", "a,b"),
    ("metric.mass", " , "),
])
def test_bad_sweeps(scenario, key, values):
    _configure(scenario, sweep__key=key, sweep__values=values)
    with pytest.raises(ConfigError):
        sweep_points(scenario)


def test_run_sweep(scenario, tmp_path):
    _configure(scenario, sweep__key="metric.mass", sweep__values="0.5,1", exhaustion__rho0=100.0)
    outcome = run_sweep(scenario, tmp_path, threads=2)
    assert outcome.exit_code == EXIT_OK
    table = pd.read_csv(tmp_path / SWEEP_FILE)
    assert list(table["value"]) == [0.5, 1.0]
    assert table["limit"].tolist() == pytest.approx([0.5, 1.0], abs=0.01)
    for i in range(2):
        assert (tmp_path / f"sweep_{i:02d}" / CONFIG_SNAPSHOT_FILE).exists()
        assert (tmp_path / f"sweep_{i:02d}" / REPORT_FILE).exists()


def test_failed_sweep_point_is_reported(scenario, tmp_path):
    _configure(scenario, sweep__key="region.params", sweep__values="radius=1,radius=abc")
    outcome = run_sweep(scenario, tmp_path)
    assert outcome.exit_code == EXIT_CHECK_FAILED
    table = pd.read_csv(tmp_path / SWEEP_FILE)
    assert table["passed"].tolist() == [True, False]
    assert "failed" in outcome.lines[1]


def test_run_command_records_manifest(scenario, tmp_path):
    scenario.set("region.params", "radius=10")
    outcome = run_command("capacity", scenario, tmp_path)
    assert (tmp_path / CONFIG_SNAPSHOT_FILE).exists()
    manifest = RunManifest(tmp_path)
    try:
        runs = [entry.to_dict() for entry in manifest.get_all()]
    finally:
        manifest.close()
    assert len(runs) == 1
    assert runs[0]["command"] == "capacity"
    assert runs[0]["exit_status"] == outcome.exit_code
    assert runs[0]["config_hash"] == scenario.config_hash()
