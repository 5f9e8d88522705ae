"""
CapMass 1.0 - Scenario Runner
Turns resolved settings into models, regions and backends, runs the
capacity / deficit / convergence / sweep commands and hands every output
file to a single collector.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import pandas as pd

from src.core.capacity import BaseCapacityBackend, CapacityEstimate, backend_registry, euclidean_backend, select_backends
from src.core.conformal_capacity import ConformalShiftBackend
from src.core.errors import CapMassError, ConfigError, RegionError, UnsupportedModelError
from src.core.grid_capacity import GridCapacityBackend, GridSpec
from src.core.manifold import EuclideanMetric, MetricModel, MultiCenterMetric, RadialConformalMetric, SchwarzschildMetric
from src.core.mass import MassReport, check_tolerance, deficit_record, mass_report
from src.core.quadrature import QuadratureSpec
from src.core.radial_capacity import RadialCapacityBackend
from src.core.regions import ExhaustionSpec, Region, generate_exhaustion, region_from_params
from src.services.reports import (
    format_capacity_line,
    write_json,
    write_record_series,
    write_records_csv,
    write_report,
)
from src.services.settings import ScenarioSettings
from src.services.storage import RunManifest
from src.utils.constants import (
    CONFIG_SNAPSHOT_FILE,
    DEFAULT_SETTINGS,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    RECORDS_FILE,
    REPORT_FILE,
    ReportConfig,
    SWEEP_FILE,
)

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    """What a command printed, wrote and returned."""
    command: str
    exit_code: int = EXIT_OK
    lines: List[str] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)
    summary: str = ""


# ===========================================
# SETTINGS -> OBJECTS
# ===========================================
def _float_list(text: str, key: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"'{key}' expects comma-separated numbers, got '{text}'") from None


def _centers(text: str) -> Tuple[Tuple[float, ...], ...]:
    centers = tuple(_float_list(part, "metric.centers") for part in text.split(";") if part.strip())
    if any(len(c) != 3 for c in centers):
        raise ConfigError(f"'metric.centers' expects 'x,y,z;x,y,z', got '{text}'")
    return centers


def metric_from_settings(s: ScenarioSettings) -> MetricModel:
    kind = s.get("metric.kind")
    n = s.get("metric.dimension")
    scale = s.get("metric.scale")
    try:
        if kind == "euclidean":
            return EuclideanMetric(dimension=n, scale=scale)
        if kind == "schwarzschild":
            return SchwarzschildMetric(mass=s.get("metric.mass"), dimension=n, scale=scale)
        if kind == "radial":
            coeffs = _float_list(s.get("metric.profile_coeffs"), "metric.profile_coeffs")
            if not coeffs:
                raise ConfigError("metric.kind = radial needs 'metric.profile_coeffs'")
            return RadialConformalMetric.from_coefficients(coeffs, dimension=n, scale=scale)
        return MultiCenterMetric(
            centers=_centers(s.get("metric.centers")),
            masses=_float_list(s.get("metric.masses"), "metric.masses"),
            scale=scale,
            dimension=n,
        )
    except ConfigError:
        raise
    except CapMassError as e:
        raise ConfigError(f"invalid metric settings: {e}") from e


def region_from_settings(s: ScenarioSettings) -> Region:
    try:
        return region_from_params(s.get("region.shape"), s.get("region.params"))
    except RegionError as e:
        raise ConfigError(str(e)) from e


def exhaustion_from_settings(s: ScenarioSettings, template: Optional[Region] = None) -> ExhaustionSpec:
    return ExhaustionSpec(
        template=template or region_from_settings(s),
        rho0=s.get("exhaustion.rho0"),
        gamma=s.get("exhaustion.gamma"),
        count=s.get("exhaustion.count"),
        rule=s.get("exhaustion.rule"),
    )


def quadrature_from_settings(s: ScenarioSettings) -> QuadratureSpec:
    return QuadratureSpec(
        angular_theta=s.get("quadrature.angular_theta"),
        angular_phi=s.get("quadrature.angular_phi"),
        radial_points=s.get("quadrature.radial_points"),
        tail_radius_factor=s.get("quadrature.tail_radius_factor"),
    )


def grid_spec_from_settings(s: ScenarioSettings) -> GridSpec:
    return GridSpec(
        grid_n=s.get("solver.grid_n"),
        outer_radius_factor=s.get("solver.outer_radius_factor"),
        outer_bc=s.get("solver.outer_bc"),
        tol=s.get("solver.tol"),
        max_iter=s.get("solver.max_iter"),
        threads=s.get("solver.threads"),
    )


def available_backends(s: ScenarioSettings) -> dict:
    """Backend instances configured for this scenario, in preference order."""
    spec = grid_spec_from_settings(s)
    return backend_registry(
        RadialCapacityBackend(tail_radius_factor=s.get("quadrature.tail_radius_factor")),
        ConformalShiftBackend(grid_spec=spec),
        euclidean_backend,
        GridCapacityBackend(spec=spec),
    )


def capacity_backends(s: ScenarioSettings, model: MetricModel, region: Region) -> List[BaseCapacityBackend]:
    try:
        backends = select_backends(s.get("capacity.backends"), model, region, available_backends(s))
    except UnsupportedModelError as e:
        raise ConfigError(str(e)) from e
    if not backends:
        raise ConfigError(f"no capacity backend applies to a {region.shape} in a {model.kind} metric")
    return backends


def pool_map(func: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map, in a worker pool when threads > 1."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


# ===========================================
# CAPACITY
# ===========================================
def backend_disagreements(estimates: Sequence[CapacityEstimate], s: ScenarioSettings) -> List[str]:
    """Pairs whose difference exceeds their combined error budget."""
    messages = []
    for i, first in enumerate(estimates):
        for second in estimates[i + 1:]:
            tol = check_tolerance(
                first, second,
                quadrature_slack=s.get("mass.slack_quadrature"),
                grid_slack=s.get("mass.slack_grid"),
            )
            diff = abs(first.value - second.value)
            if diff > tol:
                messages.append(
                    f"{first.method} and {second.method} disagree: |{first.value:.10g} - "
                    f"{second.value:.10g}| = {diff:.3g} > {tol:.3g}"
                )
    return messages


def run_capacity(s: ScenarioSettings, out_dir: Path, threads: int = 1) -> RunOutcome:
    model = metric_from_settings(s)
    region = region_from_settings(s)
    backends = capacity_backends(s, model, region)
    estimates = pool_map(lambda b: b.estimate(model, region), backends, threads)

    outcome = RunOutcome(command="capacity")
    outcome.lines = [format_capacity_line(e.value, e.error_estimate, e.method) for e in estimates]
    disagreements = backend_disagreements(estimates, s)
    if disagreements:
        outcome.lines.extend(disagreements)
        outcome.exit_code = EXIT_CHECK_FAILED
    outcome.files.append(write_json(
        {
            "metric": model.describe(),
            "region": region.describe(),
            "estimates": [e.to_dict() for e in estimates],
            "agree": not disagreements,
            "disagreements": disagreements,
        },
        Path(out_dir) / REPORT_FILE,
    ))
    outcome.summary = outcome.lines[0]
    return outcome


# ===========================================
# DEFICIT
# ===========================================
def _deficit_lines(record) -> List[str]:
    rows = [
        ("volume radius", record.v_radius, record.v_err),
        ("area radius", record.a_radius, record.a_err),
        ("capacity", record.capacity.value if record.capacity else None, record.cap_err),
        ("cv deficit (radius)", record.cv_deficit_radius, record.cv_def_err),
        ("cv deficit (normalized)", record.cv_deficit_normalized, record.cv_def_err),
        ("iso deficit", record.iso_deficit, record.iso_def_err),
        ("iso deficit (radii)", record.iso_deficit_alt, record.v_err + record.a_err),
        ("bray-miao bound", record.bray_miao_bound, record.bm_err),
    ]
    lines = [f"{name:<24} {value:.10g} ± {err:.1g}" for name, value, err in rows if value is not None]
    if record.asymmetry is not None:
        lines.append(f"{'fraenkel asymmetry':<24} {record.asymmetry:.6g}")
    lines.extend(f"error {key}: {message}" for key, message in sorted(record.errors.items()))
    return lines


def run_deficit(s: ScenarioSettings, out_dir: Path, threads: int = 1) -> RunOutcome:
    model = metric_from_settings(s)
    region = region_from_settings(s)
    backends = capacity_backends(s, model, region)
    record = deficit_record(
        region, model, backends, j=0, rho=region.bounding_radius(),
        quad=quadrature_from_settings(s), seed=s.get("rng.seed"),
    )

    outcome = RunOutcome(command="deficit", lines=_deficit_lines(record))
    out_dir = Path(out_dir)
    outcome.files.append(write_records_csv([record], out_dir / RECORDS_FILE))
    outcome.files.append(write_json(
        {"metric": model.describe(), "region": region.describe(), "record": record.to_dict()},
        out_dir / REPORT_FILE,
    ))
    if record.capacity is None:
        outcome.exit_code = EXIT_SOLVER_FAILURE
    outcome.summary = outcome.lines[0] if outcome.lines else "no functionals computed"
    return outcome


# ===========================================
# CONVERGENCE
# ===========================================
def compute_convergence(s: ScenarioSettings, threads: int = 1) -> MassReport:
    """Deficit records over the configured exhaustion and their extrapolated limits."""
    model = metric_from_settings(s)
    spec = exhaustion_from_settings(s)
    warnings: List[str] = []
    regions = generate_exhaustion(spec, warnings)
    quad = quadrature_from_settings(s)
    seed = s.get("rng.seed")

    def record(item):
        j, (rho, region) = item
        return deficit_record(
            region, model, capacity_backends(s, model, region), j=j, rho=rho, quad=quad, seed=seed
        )

    records = pool_map(record, list(enumerate(zip(spec.scales, regions))), threads)
    return mass_report(
        spec.describe(),
        records,
        model,
        power=s.get("mass.extrapolation_power"),
        log_term=s.get("mass.log_term"),
        warnings=warnings,
    )


def summary_line(report: MassReport, attribute: str = "cv_deficit_radius") -> str:
    limit = report.limits.get(attribute)
    if limit is None:
        return f"limit=n/a adm={report.adm_reference:.6g}"
    line = f"limit={limit.limit:.6g} ± {limit.tolerance:.2g} adm={report.adm_reference:.6g}"
    if limit.diverges:
        line += " diverges"
    return line


def write_convergence(report: MassReport, out_dir: Path) -> List[Path]:
    out_dir = Path(out_dir)
    files = [
        write_records_csv(report.records, out_dir / RECORDS_FILE),
        write_report(report, out_dir / REPORT_FILE),
    ]
    files.extend(write_record_series(report.records, out_dir))
    return files


def run_convergence(s: ScenarioSettings, out_dir: Path, threads: int = 1) -> RunOutcome:
    report = compute_convergence(s, threads)
    outcome = RunOutcome(command="convergence", files=write_convergence(report, out_dir))
    outcome.summary = summary_line(report)
    outcome.lines.append(outcome.summary)
    for name, check in sorted(report.checks.items()):
        if not check.passed:
            outcome.lines.append(f"check {name} failed (margin {check.margin:.3g})")
    if not report.passed:
        outcome.exit_code = EXIT_CHECK_FAILED
    return outcome


# ===========================================
# SWEEP
# ===========================================
def sweep_points(s: ScenarioSettings) -> List[ScenarioSettings]:
    key = s.get("sweep.key")
    if not key:
        raise ConfigError("sweep needs 'sweep.key'")
    if key not in DEFAULT_SETTINGS or key.startswith("sweep.") or key == "output.dir":
        raise ConfigError(f"'{key}' cannot be swept")
    values = [v.strip() for v in s.get("sweep.values").split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value in 'sweep.values'")
    return [s.derived(key, value) for value in values]


def _sweep_point(point: ScenarioSettings):
    try:
        return compute_convergence(point), None
    except CapMassError as e:
        key = point.get("sweep.key")
        logger.warning("Sweep point %s = %s failed: %s", key, point.get(key), e)
        return None, str(e)


def run_sweep(s: ScenarioSettings, out_dir: Path, threads: int = 1) -> RunOutcome:
    points = sweep_points(s)
    key = s.get("sweep.key")
    results = pool_map(_sweep_point, points, threads)

    # Single collector: files are written here, in sweep order.
    out_dir = Path(out_dir)
    outcome = RunOutcome(command="sweep")
    rows = []
    for i, (point, (report, error)) in enumerate(zip(points, results)):
        point_dir = out_dir / f"sweep_{i:02d}"
        outcome.files.append(point.save(point_dir / CONFIG_SNAPSHOT_FILE))
        row = {"index": i, "key": key, "value": point.get(key), "dir": point_dir.name}
        if report is None:
            row.update(error=error, passed=False)
            outcome.lines.append(f"{key}={point.get(key)}: failed ({error})")
        else:
            outcome.files.extend(write_convergence(report, point_dir))
            limit = report.limits.get("cv_deficit_radius")
            row.update(
                limit=limit.limit if limit else None,
                residual=limit.tolerance if limit else None,
                diverges=limit.diverges if limit else None,
                adm=report.adm_reference,
                passed=report.passed,
                error="",
            )
            outcome.lines.append(f"{key}={point.get(key)}: {summary_line(report)}")
        rows.append(row)

    columns = ["index", "key", "value", "limit", "residual", "adm", "diverges", "passed", "error", "dir"]
    path = out_dir / SWEEP_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=ReportConfig.FLOAT_FORMAT)
    outcome.files.append(path)
    if not all(row["passed"] for row in rows):
        outcome.exit_code = EXIT_CHECK_FAILED
    outcome.summary = f"{len(rows)} sweep points over {key}"
    return outcome


# ===========================================
# RUN BOOKKEEPING
# ===========================================
def record_run(s: ScenarioSettings, outcome: RunOutcome, out_dir: Path, threads: int = 1) -> None:
    """Snapshot the resolved configuration and append the run to the manifest."""
    out_dir = Path(out_dir)
    snapshot = s.save(out_dir / CONFIG_SNAPSHOT_FILE)
    names = sorted({str(Path(f).relative_to(out_dir)) for f in outcome.files} | {snapshot.name})
    manifest = RunManifest(out_dir)
    try:
        manifest.record(
            command=outcome.command,
            config_hash=s.config_hash(),
            seed=s.get("rng.seed"),
            threads=threads,
            files=names,
            exit_status=outcome.exit_code,
            summary=outcome.summary,
        )
    finally:
        manifest.close()


COMMANDS = {
    "capacity": run_capacity,
    "deficit": run_deficit,
    "convergence": run_convergence,
    "sweep": run_sweep,
}


def run_command(name: str, s: ScenarioSettings, out_dir: Path, threads: int = 1) -> RunOutcome:
    outcome = COMMANDS[name](s, out_dir, threads)
    record_run(s, outcome, out_dir, threads)
    return outcome
