"""
CapMass 1.0 - Mass Deficits
Per-region deficit records, family limits and the inequality checks built
on them.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import optimize

from src.core.capacity import BaseCapacityBackend, CapacityEstimate, euclidean_capacity
from src.core.conformal_capacity import conformal_backend
from src.core.errors import CapMassError, ExhaustionError, UnsupportedModelError
from src.core.functionals import (
    Measurement,
    area_radius_of,
    beta,
    riemannian_area,
    riemannian_volume,
    surface_willmore,
    volume_radius_of,
    willmore_energy,
)
from src.core.grid_capacity import GridSpec, capacity_grid
from src.core.manifold import EuclideanMetric, MetricModel, unit_sphere_area
from src.core.quadrature import QuadratureSpec, angular_rule
from src.core.radial_capacity import radial_backend
from src.core.regions import Ball, Ellipsoid, Region, VoxelSet, fraenkel_asymmetry
from src.utils.constants import MassConfig

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
SQRT_PI = np.sqrt(np.pi)


# ===========================================
# RECORDS
# ===========================================
@dataclass
class DeficitRecord:
    """
    Deficit functionals of one region. Any field that could not be computed
    is None and its error message is kept in `errors`.

    In dimension 3 `cv_deficit_radius` is the radius form v - c. Other
    dimensions have no radius form: both cv fields then hold the
    n-dimensional normalized deficit of `cv_deficit_n`, whose family limit is
    the mass.
    """
    j: int
    rho: float
    volume: Optional[Measurement] = None
    area: Optional[Measurement] = None
    capacity: Optional[CapacityEstimate] = None
    capacities: List[CapacityEstimate] = field(default_factory=list)
    v_radius: Optional[float] = None
    a_radius: Optional[float] = None
    cv_deficit_radius: Optional[float] = None
    cv_deficit_normalized: Optional[float] = None
    iso_deficit: Optional[float] = None
    iso_deficit_alt: Optional[float] = None
    bray_miao_bound: Optional[float] = None
    asymmetry: Optional[float] = None
    v_err: float = 0.0
    a_err: float = 0.0
    cv_def_err: float = 0.0
    iso_def_err: float = 0.0
    bm_err: float = 0.0
    errors: Dict[str, str] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def cap_err(self) -> Optional[float]:
        return self.capacity.error_estimate if self.capacity else None

    @property
    def success(self) -> bool:
        return not self.errors

    def to_row(self) -> dict:
        """One CSV row: the record columns followed by their error columns."""
        return {
            "j": self.j,
            "rho": self.rho,
            "v_radius": self.v_radius,
            "a_radius": self.a_radius,
            "capacity": self.capacity.value if self.capacity else None,
            "cap_err": self.cap_err,
            "cv_def_radius": self.cv_deficit_radius,
            "cv_def_norm": self.cv_deficit_normalized,
            "iso_def": self.iso_deficit,
            "iso_def_alt": self.iso_deficit_alt,
            "bm_bound": self.bray_miao_bound,
            "asymmetry": self.asymmetry,
            "v_err": self.v_err,
            "a_err": self.a_err,
            "cv_def_err": self.cv_def_err,
            "iso_def_err": self.iso_def_err,
            "bm_err": self.bm_err,
        }

    def to_dict(self) -> dict:
        data = self.to_row()
        data["method"] = self.capacity.method if self.capacity else None
        data["capacities"] = [c.to_dict() for c in self.capacities]
        data["errors"] = dict(self.errors)
        data["warnings"] = list(self.warnings)
        return data


@dataclass
class CheckResult:
    """Named pass/fail with the signed margin (positive means satisfied)."""
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "margin": self.margin, "detail": self.detail}


def check_tolerance(*estimates: CapacityEstimate, quadrature_slack: float = MassConfig.SLACK_QUADRATURE,
                    grid_slack: float = MassConfig.SLACK_GRID) -> float:
    """Sum of error estimates plus the slack of the coarsest method involved."""
    tol = sum(e.error_estimate for e in estimates)
    grid = [e.value for e in estimates if e.method == "grid-variational"]
    if grid:
        return tol + grid_slack * max(grid)
    return tol + quadrature_slack


# ===========================================
# DEFICIT FORMULAS
# ===========================================
def cv_deficit_normalized(volume: float, capacity: float) -> float:
    """[|K| - (4pi/3) c^3] / (4 pi c^2)."""
    return (volume - FOUR_PI * capacity**3 / 3.0) / (FOUR_PI * capacity**2)


def iso_deficit(volume: float, area: float) -> float:
    """(2/A) [|K| - A^{3/2} / (6 sqrt(pi))]."""
    return (2.0 / area) * (volume - area**1.5 / (6.0 * SQRT_PI))


def form_gap_bound(v: float, c: float) -> float:
    """(v - c)^2 (v + 2c) / (3 c^2); equals normalized minus radius deficit."""
    return (v - c) ** 2 * (v + 2.0 * c) / (3.0 * c**2)


def cv_deficit_n(volume: float, capacity: float, n: int) -> float:
    """Capacity-volume deficit in dimension n; the normalized form for n = 3."""
    omega = unit_sphere_area(n)
    beta_n = omega / n
    prefactor = 2.0 * (n - 2) / ((n - 1) * omega * capacity ** (2.0 / (n - 2)))
    return prefactor * (volume - beta_n * capacity ** (n / (n - 2)))


def iso_deficit_n(volume: float, area: float, n: int) -> float:
    """Isoperimetric deficit in dimension n; iso_deficit for n = 3."""
    omega = unit_sphere_area(n)
    prefactor = (2.0 / omega) * (omega / area) ** (2.0 / (n - 1))
    return prefactor * (volume - area ** (n / (n - 1)) / (n * omega ** (1.0 / (n - 1))))


def _first_capacity(
    region: Region, model: MetricModel, backends: Sequence[BaseCapacityBackend], record: DeficitRecord
) -> None:
    for backend in backends:
        try:
            record.capacities.append(backend.estimate(model, region))
        except CapMassError as e:
            record.errors[f"capacity:{backend.name}"] = str(e)
            logger.warning("%s failed on record %d: %s", backend.name, record.j, e)
    if record.capacities:
        record.capacity = record.capacities[0]


def deficit_record(
    region: Region,
    model: MetricModel,
    backends: Sequence[BaseCapacityBackend],
    j: int = 0,
    rho: float = float("nan"),
    quad: Optional[QuadratureSpec] = None,
    seed: int = 12345,
    with_asymmetry: bool = True,
) -> DeficitRecord:
    """
    Compute every deficit of one region. Backend and functional failures are
    stored per field; the remaining fields are still filled in.
    """
    quad = quad or QuadratureSpec()
    n = model.dimension
    record = DeficitRecord(j=j, rho=rho)

    try:
        record.volume = riemannian_volume(region, model, quad)
    except CapMassError as e:
        record.errors["volume"] = str(e)
    try:
        record.area = riemannian_area(region, model, quad)
    except CapMassError as e:
        record.errors["area"] = str(e)
    _first_capacity(region, model, backends, record)

    if record.volume:
        V, dV = record.volume.value, record.volume.error
        record.v_radius = volume_radius_of(V, n)
        record.v_err = record.v_radius * dV / (n * V)
    if record.area:
        A, dA = record.area.value, record.area.error
        record.a_radius = area_radius_of(A, n)
        record.a_err = record.a_radius * dA / ((n - 1) * A)

    if record.volume and record.capacity:
        c = record.capacity.value
        if n == 3:
            record.cv_deficit_radius = record.v_radius - c
            record.cv_deficit_normalized = cv_deficit_normalized(record.volume.value, c)
        else:
            record.cv_deficit_radius = cv_deficit_n(record.volume.value, c, n)
            record.cv_deficit_normalized = record.cv_deficit_radius
        record.cv_def_err = record.v_err + record.capacity.error_estimate

    if record.volume and record.area:
        V, A = record.volume.value, record.area.value
        record.iso_deficit = iso_deficit_n(V, A, n)
        d_area = 2.0 * V / A**2 + 1.0 / (6.0 * SQRT_PI * np.sqrt(A))
        record.iso_def_err = (2.0 / A) * record.volume.error + d_area * record.area.error
        if n == 3:
            record.iso_deficit_alt = 2.0 * (record.v_radius - record.a_radius)
        else:
            record.errors["iso_deficit_alt"] = "defined in dimension 3 only"

    if n == 3 and record.area and not isinstance(region, VoxelSet):
        try:
            willmore = _willmore_measurement(region, model, quad)
            record.bray_miao_bound, record.bm_err = _bray_miao_value(record.area, willmore)
        except CapMassError as e:
            record.errors["bray_miao_bound"] = str(e)

    if with_asymmetry and n == 3:
        result = fraenkel_asymmetry(region, seed=seed)
        record.asymmetry = result.value
        if result.warning:
            record.warnings.append(result.warning)

    return record


# ===========================================
# BRAY-MIAO
# ===========================================
@dataclass
class BrayMiaoCheck:
    bound: float
    bound_error: float
    capacity: CapacityEstimate
    tolerance: float

    @property
    def margin(self) -> float:
        return self.bound - self.capacity.value

    @property
    def holds(self) -> bool:
        return self.capacity.value <= self.bound + self.tolerance


def _willmore_measurement(region: Region, model: MetricModel, quad: QuadratureSpec) -> Measurement:
    if model.is_rotationally_symmetric and isinstance(region, Ball) and np.allclose(region.center, 0.0):
        value = willmore_energy(region.radius, model, quad)
        return Measurement(value, 1e-14 * value, "closed-form")
    return surface_willmore(region, model, quad)


def _bray_miao_value(area: Measurement, willmore: Measurement):
    A, W = area.value, willmore.value
    root_a = np.sqrt(A / (16.0 * np.pi))
    root_w = np.sqrt(W / (16.0 * np.pi))
    bound = root_a * (1.0 + root_w)
    error = bound / (2.0 * A) * area.error + root_a / (2.0 * np.sqrt(16.0 * np.pi * W)) * willmore.error
    return float(bound), float(error)


def bray_miao_bound(
    region: Region,
    model: MetricModel,
    capacity: Optional[CapacityEstimate] = None,
    backends: Optional[Sequence[BaseCapacityBackend]] = None,
    quad: Optional[QuadratureSpec] = None,
) -> BrayMiaoCheck:
    """
    sqrt(A/16pi) (1 + sqrt(W/16pi)) with W the Willmore energy of the
    boundary, and the flag capacity <= bound + tolerance.
    """
    if model.dimension != 3:
        raise UnsupportedModelError("the Bray-Miao bound is three-dimensional")
    quad = quad or QuadratureSpec()
    area = riemannian_area(region, model, quad)
    bound, error = _bray_miao_value(area, _willmore_measurement(region, model, quad))
    if capacity is None:
        capacity = best_capacity(region, model, backends)
    tol = error + check_tolerance(capacity)
    return BrayMiaoCheck(bound=bound, bound_error=error, capacity=capacity, tolerance=tol)


def best_capacity(
    region: Region, model: MetricModel, backends: Optional[Sequence[BaseCapacityBackend]] = None
) -> CapacityEstimate:
    """First applicable backend among radial, conformal shift and the grid."""
    if backends:
        return backends[0].estimate(model, region)
    if radial_backend.is_available(model, region):
        return radial_backend.estimate(model, region)
    if conformal_backend.is_available(model, region):
        return conformal_backend.estimate(model, region)
    estimate, _ = capacity_grid(model, region)
    return estimate


# ===========================================
# EXTRAPOLATION
# ===========================================
@dataclass
class Extrapolation:
    """Least-squares limit of d_j = L + a rho^-p (+ b rho^-p log rho) over one family."""
    limit: float
    residual: float
    slope: float
    power: float
    log_term: bool
    tail: float
    linear_slope: float
    bracketed: bool
    diverges: bool
    spread: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def tolerance(self) -> float:
        return self.residual + self.tail

    def to_dict(self) -> dict:
        return {
            "limit": self.limit,
            "residual": self.residual,
            "slope": self.slope,
            "power": self.power,
            "log_term": self.log_term,
            "tail": self.tail,
            "linear_slope": self.linear_slope,
            "bracketed": self.bracketed,
            "diverges": self.diverges,
            "spread": self.spread,
            "warnings": list(self.warnings),
        }


def mass_extrapolate(
    records: Sequence,
    power: float = MassConfig.EXTRAPOLATION_POWER,
    attribute: str = "cv_deficit_radius",
    log_term: bool = False,
) -> Extrapolation:
    """
    Limit over this family of the chosen deficit.

    Args:
        records: DeficitRecords, or (rho, value) pairs
        power: decay exponent p of the correction term
        attribute: DeficitRecord field to extrapolate
        log_term: add a rho^-p log(rho) basis function

    Returns:
        Extrapolation; `diverges` flags families that a linear or logarithmic
        growth in rho fits better than the decaying model
    """
    if records and isinstance(records[0], DeficitRecord):
        pairs = [(r.rho, getattr(r, attribute)) for r in records if getattr(r, attribute) is not None]
    else:
        pairs = [(float(a), float(b)) for a, b in records]
    if len(pairs) < MassConfig.MIN_EXHAUSTION:
        raise ExhaustionError(f"need at least {MassConfig.MIN_EXHAUSTION} values of {attribute}")
    rho = np.array([p[0] for p in pairs], dtype=float)
    values = np.array([p[1] for p in pairs], dtype=float)
    if np.any(np.diff(rho) <= 0):
        raise ExhaustionError("extrapolation needs strictly increasing scales")

    columns = [np.ones_like(rho), rho**-power]
    if log_term:
        columns.append(rho**-power * np.log(rho))
    design = np.stack(columns, axis=-1)
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    fitted = design @ coeffs
    residual = float(np.max(np.abs(values - fitted)))
    limit, slope = float(coeffs[0]), float(coeffs[1])
    tail = float(np.abs(fitted[-1] - limit))

    # Bracketed: the decaying fit explains the family above the noise floor
    floor = _noise_floor(records, attribute, values)
    spread = float(values.max() - values.min())
    bracketed = bool(residual <= MassConfig.FIT_QUALITY * spread + floor)

    warnings = []
    last = values[-3:]
    steps = np.diff(last)
    if steps[0] * steps[1] < 0 and min(abs(steps)) > residual:
        warnings.append(f"non-monotone tail in {attribute}: last values {last.tolist()}")
        logger.warning(warnings[-1])

    # Growth models: linear and logarithmic in rho
    linear_fit = np.polyfit(rho, values, 1)
    linear_slope = float(linear_fit[0])
    growth_residual = min(
        float(np.max(np.abs(values - np.polyval(linear_fit, rho)))),
        float(np.max(np.abs(values - np.polyval(np.polyfit(np.log(rho), values, 1), np.log(rho))))),
    )
    moving = abs(values[-1] - values[0]) > 10.0 * floor
    diverges = bool(moving and growth_residual + floor < MassConfig.DIVERGENCE_RATIO * residual)
    if diverges:
        warnings.append(f"{attribute} keeps growing with rho; no finite limit")
        logger.warning(warnings[-1])

    return Extrapolation(
        limit=limit,
        residual=residual,
        slope=slope,
        power=power,
        log_term=log_term,
        tail=tail,
        linear_slope=linear_slope,
        bracketed=bracketed,
        diverges=diverges,
        spread=spread,
        warnings=warnings,
    )


# Error estimate of each extrapolated DeficitRecord field
_ERROR_FIELDS = {
    "cv_deficit_radius": ("cv_def_err",),
    "cv_deficit_normalized": ("cv_def_err",),
    "iso_deficit": ("iso_def_err",),
    "iso_deficit_alt": ("v_err", "a_err"),
}


def _noise_floor(records: Sequence, attribute: str, values: np.ndarray) -> float:
    """Rounding floor, raised to the largest per-record error estimate when records carry one."""
    floor = MassConfig.NOISE_FLOOR * max(1.0, float(np.max(np.abs(values))))
    if records and isinstance(records[0], DeficitRecord):
        errors = [
            sum(getattr(r, name) for name in _ERROR_FIELDS.get(attribute, ()))
            for r in records if getattr(r, attribute) is not None
        ]
        floor += 2.0 * max(errors, default=0.0)
    return floor


@dataclass
class MassReport:
    """Everything a convergence run produces for one exhaustion."""
    exhaustion: dict
    records: List[DeficitRecord]
    limits: Dict[str, Extrapolation]
    adm_reference: float
    checks: Dict[str, CheckResult] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "exhaustion": self.exhaustion,
            "records": [r.to_dict() for r in self.records],
            "limits": {k: v.to_dict() for k, v in self.limits.items()},
            "adm_reference": self.adm_reference,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "warnings": list(self.warnings),
        }

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


LIMIT_ATTRIBUTES = ("cv_deficit_radius", "cv_deficit_normalized", "iso_deficit", "iso_deficit_alt")


def mass_report(
    exhaustion: dict,
    records: List[DeficitRecord],
    model: MetricModel,
    power: float = MassConfig.EXTRAPOLATION_POWER,
    log_term: bool = False,
    warnings: Optional[List[str]] = None,
) -> MassReport:
    """Extrapolate every deficit that has enough values and add the per-record checks."""
    limits = {}
    notes = list(warnings or [])
    for attribute in LIMIT_ATTRIBUTES:
        try:
            limits[attribute] = mass_extrapolate(records, power, attribute, log_term)
        except ExhaustionError as e:
            notes.append(f"{attribute}: {e}")
    for record in records:
        notes.extend(record.warnings)

    report = MassReport(
        exhaustion=exhaustion, records=records, limits=limits, adm_reference=model.adm_mass(), warnings=notes
    )
    for name, extrapolation in limits.items():
        report.checks[f"{name}_bracketed"] = CheckResult(
            name=f"{name}_bracketed",
            passed=extrapolation.bracketed or extrapolation.diverges,
            margin=MassConfig.FIT_QUALITY * extrapolation.spread - extrapolation.residual,
            detail="decaying fit residual within the fit-quality share of the family spread",
        )
    form = [r for r in records if r.cv_deficit_radius is not None and model.dimension == 3]
    if form:
        worst = max(
            abs((r.cv_deficit_normalized - r.cv_deficit_radius) - form_gap_bound(r.v_radius, r.capacity.value))
            / max(1.0, form_gap_bound(r.v_radius, r.capacity.value))
            for r in form
        )
        report.checks["form_identity"] = CheckResult("form_identity", worst <= 1e-9, 1e-9 - worst)
    bm = [r for r in records if r.bray_miao_bound is not None and r.capacity is not None]
    if bm:
        margins = [r.bray_miao_bound + r.bm_err + check_tolerance(r.capacity) - r.capacity.value for r in bm]
        report.checks["bray_miao"] = CheckResult("bray_miao", min(margins) >= 0, float(min(margins)))
    return report


# ===========================================
# CHECKS
# ===========================================
def _centered_capacity(r: float, model: MetricModel) -> CapacityEstimate:
    ball = Ball(radius=r)
    if radial_backend.is_available(model, ball):
        return radial_backend.estimate(model, ball)
    return conformal_backend.estimate(model, ball)


def expansion_check(r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """cap(B_r) - [r + beta(r)/(2r) - m/2], which tends to 0."""
    if model.dimension != 3:
        raise UnsupportedModelError("the capacity expansion is checked in dimension 3")
    cap = _centered_capacity(r, model).value
    return cap - (r + beta(r, model, quad) / (2.0 * r) - model.adm_mass() / 2.0)


def bounded_spread_check(
    records: Sequence[DeficitRecord],
    model: MetricModel,
    spread: float,
    tolerance: Optional[float] = None,
    power: float = MassConfig.EXTRAPOLATION_POWER,
) -> CheckResult:
    """The cv-deficit limit of a family with radial spread <= alpha stays below m + alpha."""
    extrapolation = mass_extrapolate(records, power)
    if tolerance is None:
        tolerance = extrapolation.tolerance + max(
            (r.cv_def_err for r in records if r.cv_deficit_radius is not None), default=0.0
        )
    ceiling = model.adm_mass() + spread
    margin = ceiling + tolerance - extrapolation.limit
    return CheckResult(
        name="bounded_spread",
        passed=margin >= 0,
        margin=float(margin),
        detail=f"limit {extrapolation.limit:.6g} <= m + alpha = {ceiling:.6g}",
    )


def _euclidean_capacity_estimate(region: Region, grid_spec: Optional[GridSpec] = None) -> CapacityEstimate:
    if isinstance(region, (Ball, Ellipsoid)):
        value = euclidean_capacity(region)
        return CapacityEstimate(value=value, method="euclidean-closed-form", error_estimate=1e-14 * value)
    estimate, _ = capacity_grid(EuclideanMetric(), region, grid_spec)
    return estimate


@dataclass
class IsocapacitaryCheck:
    asymmetry: float
    capacity: float
    volume_radius: float
    constant: Optional[float]

    @property
    def skipped(self) -> bool:
        return self.constant is None


def quantitative_isocap_check(
    region: Region,
    seed: int = 12345,
    floor: float = MassConfig.ASYMMETRY_FLOOR,
    grid_spec: Optional[GridSpec] = None,
) -> IsocapacitaryCheck:
    """c = (cap_0/v - 1) / A^4; skipped when A is below the asymmetry floor."""
    asymmetry = fraenkel_asymmetry(region, seed=seed).value
    capacity = _euclidean_capacity_estimate(region, grid_spec).value
    v = volume_radius_of(region.euclidean_volume(), 3)
    constant = None
    if asymmetry >= floor:
        constant = (capacity / v - 1.0) / asymmetry**4
    return IsocapacitaryCheck(asymmetry=asymmetry, capacity=capacity, volume_radius=v, constant=constant)


@dataclass
class HigherDimRecord:
    dimension: int
    r: float
    volume: float
    area: float
    capacity: float
    cv_deficit: float
    iso_deficit: float


def higher_dim_deficits(
    region: Ball, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> HigherDimRecord:
    """Dimension-n capacity-volume and isoperimetric deficits of a centered ball."""
    n = model.dimension
    if not model.is_rotationally_symmetric or n not in (3, 4, 5):
        raise UnsupportedModelError("higher-dimensional deficits need a radial model with n in {3, 4, 5}")
    if not (isinstance(region, Ball) and np.allclose(region.center, 0.0)):
        raise UnsupportedModelError("higher-dimensional deficits need a centered ball")
    volume = riemannian_volume(region, model, quad).value
    area = riemannian_area(region, model, quad).value
    capacity = radial_backend.estimate(model, region).value
    return HigherDimRecord(
        dimension=n,
        r=region.radius,
        volume=volume,
        area=area,
        capacity=capacity,
        cv_deficit=cv_deficit_n(volume, capacity, n),
        iso_deficit=iso_deficit_n(volume, area, n),
    )


@dataclass
class EndShift:
    shift: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.shift <= self.bound * (1.0 + 1e-12)


def end_dependence_shift(volume: float, delta: float) -> EndShift:
    """Change of the volume radius when delta is added to |K|, with its bound delta/(4 pi v^2)."""
    v = volume_radius_of(volume, 3)
    shifted = volume_radius_of(volume + delta, 3)
    return EndShift(shift=abs(shifted - v), bound=abs(delta) / (FOUR_PI * min(v, shifted) ** 2))


@dataclass
class SandwichCheck:
    Lambda: float
    volume_ratio: float
    capacity_ratio: float

    @property
    def passed(self) -> bool:
        lo, hi = self.Lambda**-3 * (1.0 - 1e-9), self.Lambda**3 * (1.0 + 1e-9)
        return lo <= self.volume_ratio <= hi and lo <= self.capacity_ratio <= hi


def sandwich_constant(model_1: MetricModel, model_2: MetricModel, region: Region, shells: int = 12) -> float:
    """
    Lambda with Lambda^-2 g_2 <= g_1 <= Lambda^2 g_2 outside the region.
    Exact for models that differ by a constant scaling, sampled otherwise.
    """
    if _without_scale(model_1) == _without_scale(model_2):
        ratio = model_1.scale / model_2.scale
        return float(np.sqrt(max(ratio, 1.0 / ratio)))
    rule = angular_rule(16, 32)
    center = region.centroid()
    r0 = region.extent_from(center)
    radii = r0 * 2.0 ** np.arange(shells)
    pts = (center + radii[:, None, None] * rule.directions[None]).reshape(-1, 3)
    pts = np.vstack([pts, region.boundary_samples(rule).points])
    ratio = model_1.metric_factor(pts, check_domain=False) / model_2.metric_factor(pts, check_domain=False)
    return float(np.sqrt(max(ratio.max(), 1.0 / ratio.min())))


def _without_scale(model: MetricModel) -> dict:
    description = dict(model.describe())
    description.pop("scale", None)
    return description


def metric_sandwich_check(
    region: Region,
    model_1: MetricModel,
    model_2: MetricModel,
    quad: Optional[QuadratureSpec] = None,
) -> SandwichCheck:
    """Lambda^-3 <= |K|_1/|K|_2, cap_1/cap_2 <= Lambda^3."""
    lam = sandwich_constant(model_1, model_2, region)
    v1 = riemannian_volume(region, model_1, quad).value
    v2 = riemannian_volume(region, model_2, quad).value
    c1 = best_capacity(region, model_1).value
    c2 = best_capacity(region, model_2).value
    return SandwichCheck(Lambda=lam, volume_ratio=v1 / v2, capacity_ratio=c1 / c2)


def pfs_check(region: Region, slack: float = MassConfig.SLACK_QUADRATURE) -> CheckResult:
    """Euclidean capacity >= volume radius - tolerance."""
    estimate = _euclidean_capacity_estimate(region)
    v = volume_radius_of(region.euclidean_volume(), 3)
    margin = estimate.value - v + check_tolerance(estimate, quadrature_slack=slack)
    return CheckResult(
        name="pfs", passed=margin >= 0, margin=float(margin),
        detail=f"cap {estimate.value:.8g} vs volume radius {v:.8g}",
    )


def equal_volume_ball_radius(volume: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """Radius of the centered coordinate ball with |B_r|_g = volume."""
    inner = 0.0
    if model.excised_balls():
        inner = max(np.linalg.norm(b.center) + b.radius for b in model.excised_balls())
    guess = volume_radius_of(volume, model.dimension) / np.sqrt(model.scale)

    def excess(r: float) -> float:
        return riemannian_volume(Ball(radius=r), model, quad).value - volume

    lo = inner * (1.0 + 1e-6) if inner > 0 else 1e-9 * guess
    hi = max(guess, 2.0 * lo)
    while excess(hi) < 0:
        hi *= 2.0
    if excess(lo) > 0:
        raise UnsupportedModelError("volume is smaller than the smallest admissible centered ball")
    return float(optimize.brentq(excess, lo, hi, xtol=1e-12 * hi, rtol=1e-14))


@dataclass
class BallReplacement:
    region: Region
    replaced: bool
    capacity_before: float
    capacity_after: float


def ball_replacement(
    region: Region,
    model: MetricModel,
    backends: Optional[Sequence[BaseCapacityBackend]] = None,
    quad: Optional[QuadratureSpec] = None,
) -> BallReplacement:
    """Swap K for the equal-volume centered ball when that ball has smaller capacity."""
    volume = riemannian_volume(region, model, quad).value
    ball = Ball(radius=equal_volume_ball_radius(volume, model, quad))
    before = best_capacity(region, model, backends).value
    after = _centered_capacity(ball.radius, model).value
    if after < before:
        return BallReplacement(region=ball, replaced=True, capacity_before=before, capacity_after=after)
    return BallReplacement(region=region, replaced=False, capacity_before=before, capacity_after=before)


def hf_volume_radius_shift(r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """v_g(B_r) - r, which tends to 3m/2 for harmonically flat metrics."""
    volume = riemannian_volume(Ball(radius=r), model, quad).value
    return volume_radius_of(volume, model.dimension) - r * np.sqrt(model.scale)

