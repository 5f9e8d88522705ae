"""
CapMass 1.0 - Verification Suite
Built-in acceptance checks against closed forms. Every criterion prints one
or more lines with the measured value, its target and the tolerance; a
failing criterion is reported and the suite moves on.
"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.core.capacity import euclidean_backend, euclidean_capacity
from src.core.conformal_capacity import conformal_backend
from src.core.functionals import beta, volume_radius_of
from src.core.grid_capacity import GridSpec, capacity_grid
from src.core.manifold import EuclideanMetric, MultiCenterMetric, SchwarzschildMetric
from src.core.mass import (
    DeficitRecord,
    bounded_spread_check,
    bray_miao_bound,
    cv_deficit_normalized,
    deficit_record,
    expansion_check,
    form_gap_bound,
    higher_dim_deficits,
    mass_extrapolate,
    metric_sandwich_check,
    pfs_check,
)
from src.core.quadrature import QuadratureSpec
from src.core.radial_capacity import RadialCapacityBackend
from src.core.regions import Ball, Ellipsoid, ExhaustionSpec, generate_exhaustion, radial_spread
from src.services.reports import write_json
from src.services.runner import RunOutcome, grid_spec_from_settings, quadrature_from_settings
from src.services.settings import ScenarioSettings
from src.utils.constants import EXIT_CHECK_FAILED, REPORT_FILE

logger = logging.getLogger(__name__)

# Two-center harmonically flat model used by the shift checks
TWO_CENTERS = ((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0))
TWO_MASSES = (0.5, 0.5)


@dataclass
class CriterionResult:
    """One printed verification line."""
    label: str
    name: str
    passed: bool
    measured: float
    target: float
    tolerance: float
    detail: str = ""
    skipped: bool = False

    @property
    def status(self) -> str:
        if self.skipped:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        text = (
            f"[{self.status}] {self.label:<4} {self.name}: measured={self.measured:.6g} "
            f"target={self.target:.6g} tol={self.tolerance:.3g}"
        )
        return f"{text} ({self.detail})" if self.detail else text

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "name": self.name,
            "status": self.status,
            "measured": self.measured,
            "target": self.target,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _result(label, name, measured, target, tolerance, passed=None, detail="") -> CriterionResult:
    if passed is None:
        passed = bool(abs(measured - target) <= tolerance)
    return CriterionResult(label, name, bool(passed), float(measured), float(target), float(tolerance), detail)


class VerificationSuite:
    """
    The twelve acceptance criteria. Grid criteria are skipped with `fast`;
    the quadrature criteria always run.
    """

    def __init__(self, quad: Optional[QuadratureSpec] = None, grid_spec: Optional[GridSpec] = None,
                 seed: int = 12345, fast: bool = False):
        self.quad = quad or QuadratureSpec()
        self.grid_spec = grid_spec or GridSpec()
        self.seed = seed
        self.fast = fast
        self.radial = RadialCapacityBackend(self.quad.tail_radius_factor)
        self._ball_records: Dict[float, List[DeficitRecord]] = {}

    # -------------------------------------------
    # Shared data
    # -------------------------------------------
    def ball_records(self, m: float) -> List[DeficitRecord]:
        """Schwarzschild ball exhaustion rho in {50,100,200,400} * max(m, 1)."""
        if m not in self._ball_records:
            model = SchwarzschildMetric(mass=m)
            scale = max(m, 1.0)
            self._ball_records[m] = [
                deficit_record(Ball(radius=rho * scale), model, [self.radial], j=j, rho=rho * scale,
                               quad=self.quad, with_asymmetry=False)
                for j, rho in enumerate((50.0, 100.0, 200.0, 400.0))
            ]
        return self._ball_records[m]

    # -------------------------------------------
    # Criteria
    # -------------------------------------------
    def euclidean_capacity(self) -> List[CriterionResult]:
        model = EuclideanMetric()
        worst = max(
            abs(self.radial.estimate(model, Ball(radius=R)).value - R) / R for R in (0.5, 1.0, 10.0)
        )
        results = [_result("1", "Euclidean ball capacity (radial)", worst, 0.0, 1e-10)]
        if self.fast:
            results.append(self._skipped("1g", "Euclidean ball capacity (grid)"))
            return results
        start = time.perf_counter()
        estimate, _ = capacity_grid(model, Ball(radius=1.0), self.grid_spec)
        per_solve = (time.perf_counter() - start) / 2.0
        results.append(_result(
            "1g", "Euclidean ball capacity (grid)", estimate.value, 1.0, 0.015,
            passed=abs(estimate.value - 1.0) <= 0.015 and per_solve <= 60.0,
            detail=f"{self.grid_spec.grid_n}^3 {self.grid_spec.outer_bc}, {per_solve:.1f} s per solve",
        ))
        return results

    def schwarzschild_closed_form(self) -> List[CriterionResult]:
        worst = 0.0
        for m in (0.5, 1.0, 2.0):
            model = SchwarzschildMetric(mass=m)
            for r in (2 * m, 10 * m, 100 * m):
                value = self.radial.estimate(model, Ball(radius=r)).value
                worst = max(worst, abs(value - (r + m / 2.0)) / (r + m / 2.0))
        return [_result("2", "Schwarzschild cap(B_r) = r + m/2", worst, 0.0, 1e-8)]

    def mass_recovery(self) -> List[CriterionResult]:
        results = []
        for m in (0.5, 1.0, 2.0):
            records = self.ball_records(m)
            limit = mass_extrapolate(records, power=1.0).limit
            constants = np.array([abs(r.cv_deficit_radius - m) * r.rho for r in records])
            spread = float(constants.max() / constants.min())
            results.append(_result(f"3.{m:g}", f"cv deficit limit, m={m:g}", limit, m, 0.005 * m))
            results.append(_result(
                f"3c{m:g}", f"C = |deficit - m| rho stable, m={m:g}", spread, 1.0, 0.5,
                passed=spread <= 1.5, detail="max/min over the family",
            ))
        return results

    def form_equivalence(self) -> List[CriterionResult]:
        model = SchwarzschildMetric(mass=1.0)
        gaps, worst = [], 0.0
        for r in (50.0, 100.0, 200.0, 400.0):
            V, c = model.exact_volume(r), model.exact_capacity(r)
            v = volume_radius_of(V)
            gap = cv_deficit_normalized(V, c) - (v - c)
            gaps.append(gap)
            worst = max(worst, abs(gap - form_gap_bound(v, c)) / max(v, c))
        decay = min(gaps[i] / gaps[i + 1] for i in range(len(gaps) - 1))
        return [
            _result("4", "form gap decay per doubling", decay, 2.0, 0.2, passed=decay >= 1.8),
            _result("4i", "form gap identity", worst, 0.0, 1e-12),
        ]

    def bray_miao(self) -> List[CriterionResult]:
        worst = 0.0
        for m in (1.0, 2.0):
            model = SchwarzschildMetric(mass=m)
            for r in (5.0, 10.0, 50.0):
                ball = Ball(radius=r)
                check = bray_miao_bound(ball, model, capacity=self.radial.estimate(model, ball), quad=self.quad)
                worst = max(worst, abs(check.margin) / check.capacity.value)
        ellipsoid = Ellipsoid(axes=(2.0, 1.0, 1.0))
        model = EuclideanMetric()
        check = bray_miao_bound(
            ellipsoid, model, capacity=euclidean_backend.estimate(model, ellipsoid), quad=self.quad
        )
        budget = check.bound_error + check.capacity.error_estimate
        return [
            _result("5", "Bray-Miao equality on Schwarzschild spheres", worst, 0.0, 1e-8),
            _result(
                "5e", "Bray-Miao strict on ellipsoid (2,1,1)", check.margin, 0.0, 10.0 * budget,
                passed=check.margin > 10.0 * budget,
            ),
        ]

    def harmonic_shift(self) -> List[CriterionResult]:
        if self.fast:
            return [self._skipped("6", "harmonically flat shift (grid)")]
        results = []
        model = MultiCenterMetric(centers=TWO_CENTERS, masses=TWO_MASSES)
        for rho in (6.0, 10.0):
            estimate, _ = capacity_grid(model, Ball(radius=rho), self.grid_spec)
            target = rho + 0.5
            results.append(_result(
                f"6.{rho:g}", f"two-center cap(B_{rho:g})", estimate.value, target, 0.02 * target
            ))
        model = SchwarzschildMetric(mass=1.0)
        ball = Ball(radius=6.0, center=(2.0, 0.0, 0.0))
        estimate, _ = capacity_grid(model, ball, self.grid_spec)
        target = euclidean_capacity(ball) + 0.5
        results.append(_result("6o", "off-center Schwarzschild ball", estimate.value, target, 0.02 * target))
        return results

    def beta_consistency(self) -> List[CriterionResult]:
        model = SchwarzschildMetric(mass=1.0)
        radii = (20.0, 40.0, 80.0)
        excess = max(abs(beta(r, model, self.quad) / (2.0 * r) - 1.0) * r / 2.0 for r in radii)
        residuals = [abs(expansion_check(r, model, self.quad)) for r in radii]
        decay = min(residuals[i] / residuals[i + 1] for i in range(len(residuals) - 1))

        two_center = MultiCenterMetric(centers=TWO_CENTERS, masses=TWO_MASSES)
        fine = beta(20.0, two_center, self.quad)
        coarse = beta(20.0, two_center, self.quad.coarsened())
        return [
            _result("7", "|beta/2r - 1| r/2 <= 1", excess, 0.0, 1.0, passed=excess <= 1.0),
            _result("7e", "expansion residual decay per doubling", decay, 2.0, 0.2, passed=decay >= 1.8),
            _result("7q", "beta quadrature self-consistency", abs(fine - coarse) / abs(fine), 0.0, 1e-9),
        ]

    def higher_dimensions(self) -> List[CriterionResult]:
        model = SchwarzschildMetric(mass=2.0, dimension=4)
        worst = max(
            abs(self.radial.estimate(model, Ball(radius=r)).value - (r**2 + 1.0)) / (r**2 + 1.0)
            for r in (3.0, 5.0, 10.0)
        )
        pairs = [(r, higher_dim_deficits(Ball(radius=r), model, self.quad).cv_deficit) for r in (5.0, 10.0, 20.0)]
        limit = mass_extrapolate(pairs, power=2.0, log_term=True).limit
        return [
            _result("8", "n=4 cap(B_r) = r^2 + 1", worst, 0.0, 1e-8),
            _result("8m", "n=4 cv deficit limit", limit, 2.0, 0.02),
        ]

    def asymmetric_divergence(self) -> List[CriterionResult]:
        model = EuclideanMetric()
        spec = ExhaustionSpec(template=Ellipsoid(axes=(2.0, 1.0, 1.0)), rho0=10.0, gamma=2.0, count=6)
        records = [
            deficit_record(region, model, [euclidean_backend], j=j, rho=rho, quad=self.quad, with_asymmetry=False)
            for j, (rho, region) in enumerate((rho, spec.member(rho)) for rho in spec.scales)
        ]
        values = np.array([r.cv_deficit_radius for r in records])
        crossing = next((r.rho for r in records if r.cv_deficit_radius < -10.0), None)
        analytic = 2.0 ** (1.0 / 3.0) - euclidean_capacity(spec.template)
        fit = mass_extrapolate(records)
        slope_error = abs(fit.linear_slope - analytic) / abs(analytic)
        shape_ok = bool(np.all(values < 0) and np.all(np.diff(values) < 0) and crossing is not None)
        return [
            _result(
                "9", "ellipsoid family diverges linearly", slope_error, 0.0, 0.2,
                passed=shape_ok and slope_error <= 0.2 and fit.diverges,
                detail=f"below -10 at rho={crossing:g}" if crossing else "never below -10",
            )
        ]

    def bounded_spread(self) -> List[CriterionResult]:
        model = SchwarzschildMetric(mass=1.0)
        spec = ExhaustionSpec(
            template=Ball(radius=1.0, center=(0.5, 0.0, 0.0)), rho0=50.0, gamma=2.0, count=4,
            rule="scale-radius-fix-offset",
        )
        regions = generate_exhaustion(spec)
        records = [
            deficit_record(region, model, [conformal_backend], j=j, rho=rho, quad=self.quad, with_asymmetry=False)
            for j, (rho, region) in enumerate(zip(spec.scales, regions))
        ]
        alpha = radial_spread(regions[-1])
        check = bounded_spread_check(records, model, alpha)
        limit = mass_extrapolate(records).limit
        return [
            _result("10", "offset-ball limit", limit, 1.0, 0.02),
            _result("10b", "limit <= m + alpha", check.margin, 0.0, 0.0, passed=check.passed, detail=check.detail),
        ]

    def isoperimetric_cross_check(self) -> List[CriterionResult]:
        results = []
        for m in (0.5, 1.0, 2.0):
            model = SchwarzschildMetric(mass=m)
            records = self.ball_records(m)
            limit = mass_extrapolate(records, power=1.0, attribute="iso_deficit_alt").limit
            worst = 0.0
            for r in records:
                v = volume_radius_of(model.exact_volume(r.rho))
                a = np.sqrt(model.exact_area(r.rho) / (4.0 * np.pi))
                worst = max(worst, abs(r.iso_deficit_alt - 2.0 * (v - a)))
            results.append(_result(f"11.{m:g}", f"iso deficit limit, m={m:g}", limit, m, 0.005 * m))
            results.append(_result(f"11r{m:g}", f"iso deficit vs closed form, m={m:g}", worst, 0.0, 1e-6))
        return results

    def invariants(self) -> List[CriterionResult]:
        violations: List[str] = []

        model = SchwarzschildMetric(mass=1.0)
        caps = [self.radial.estimate(model, Ball(radius=r)).value for r in (1.0, 2.0, 5.0, 10.0, 50.0)]
        if np.any(np.diff(caps) <= 0):
            violations.append("ball capacities not increasing")
        nested = [(1.0, 1.0, 1.0), (2.0, 1.0, 1.0), (2.0, 2.0, 1.0), (2.0, 2.0, 2.0)]
        if np.any(np.diff([euclidean_capacity(Ellipsoid(axes=a)) for a in nested]) <= 0):
            violations.append("nested ellipsoid capacities not increasing")

        for lam in (0.25, 4.0):
            for r in (2.0, 10.0):
                base = self.radial.estimate(model, Ball(radius=r)).value
                scaled = self.radial.estimate(model.scaled(lam), Ball(radius=r)).value
                if abs(scaled - np.sqrt(lam) * base) > 1e-10 * scaled:
                    violations.append(f"scaling lambda={lam:g} r={r:g}")

        for region in (Ball(radius=5.0), Ellipsoid(axes=(6.0, 4.0, 3.0))):
            if not metric_sandwich_check(region, model, model.scaled(2.25), self.quad).passed:
                violations.append(f"sandwich on {region.shape}")

        rng = np.random.default_rng(self.seed)
        for k in range(50):
            center = rng.uniform(-2.0, 2.0, size=3)
            if k % 2:
                region = Ball(radius=float(rng.uniform(0.2, 3.0)), center=center)
            else:
                region = Ellipsoid(axes=np.sort(rng.uniform(0.2, 3.0, size=3))[::-1], center=center)
            if not pfs_check(region).passed:
                violations.append(f"PFS on random region {k}")

        return [_result(
            "12", "invariant suite violations", len(violations), 0.0, 0.0,
            detail="; ".join(violations[:3]),
        )]

    # -------------------------------------------
    # Driver
    # -------------------------------------------
    def criteria(self) -> List[Tuple[str, Callable[[], List[CriterionResult]]]]:
        return [
            ("1", self.euclidean_capacity),
            ("2", self.schwarzschild_closed_form),
            ("3", self.mass_recovery),
            ("4", self.form_equivalence),
            ("5", self.bray_miao),
            ("6", self.harmonic_shift),
            ("7", self.beta_consistency),
            ("8", self.higher_dimensions),
            ("9", self.asymmetric_divergence),
            ("10", self.bounded_spread),
            ("11", self.isoperimetric_cross_check),
            ("12", self.invariants),
        ]

    def run(self, echo: Optional[Callable[[str], None]] = None) -> List[CriterionResult]:
        results = []
        for label, criterion in self.criteria():
            try:
                lines = criterion()
            except Exception as e:
                logger.error("Criterion %s raised: %s", label, e)
                lines = [CriterionResult(label, criterion.__name__, False, float("nan"), float("nan"),
                                         float("nan"), detail=f"{type(e).__name__}: {e}")]
            for result in lines:
                if echo:
                    echo(result.line())
            results.extend(lines)
        return results

    @staticmethod
    def _skipped(label: str, name: str) -> CriterionResult:
        return CriterionResult(label, name, True, float("nan"), float("nan"), float("nan"),
                               detail="skipped with --fast", skipped=True)


def run_verify(s: ScenarioSettings, out_dir: Path, threads: int = 1, fast: bool = False,
               echo: Optional[Callable[[str], None]] = None) -> RunOutcome:
    suite = VerificationSuite(
        quad=quadrature_from_settings(s),
        grid_spec=grid_spec_from_settings(s),
        seed=s.get("rng.seed"),
        fast=fast,
    )
    results = suite.run(echo)
    failed = [r for r in results if not r.passed]
    outcome = RunOutcome(command="verify", lines=[r.line() for r in results])
    outcome.files.append(write_json(
        {"fast": fast, "passed": not failed, "criteria": [r.to_dict() for r in results]},
        Path(out_dir) / REPORT_FILE,
    ))
    if failed:
        outcome.exit_code = EXIT_CHECK_FAILED
    outcome.summary = f"{len(results) - len(failed)}/{len(results)} verification lines passed"
    return outcome
