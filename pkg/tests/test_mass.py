import numpy as np
import pytest

from src.core.capacity import CapacityEstimate, euclidean_backend
from src.core.errors import ExhaustionError, UnsupportedModelError
from src.core.manifold import EuclideanMetric, SchwarzschildMetric
from src.core.mass import (
    LIMIT_ATTRIBUTES,
    ball_replacement,
    best_capacity,
    bounded_spread_check,
    bray_miao_bound,
    check_tolerance,
    cv_deficit_n,
    cv_deficit_normalized,
    deficit_record,
    end_dependence_shift,
    equal_volume_ball_radius,
    expansion_check,
    form_gap_bound,
    hf_volume_radius_shift,
    higher_dim_deficits,
    iso_deficit,
    iso_deficit_n,
    mass_extrapolate,
    mass_report,
    metric_sandwich_check,
    pfs_check,
    quantitative_isocap_check,
)
from src.core.radial_capacity import radial_backend
from src.core.regions import Ball, Ellipsoid, ExhaustionSpec, StarShaped

SCALES = [100.0, 200.0, 400.0, 800.0]


@pytest.fixture
def ball_records(schwarzschild, quad):
    return [
        deficit_record(Ball(radius=rho), schwarzschild, [radial_backend], j=j, rho=rho, quad=quad,
                       with_asymmetry=False)
        for j, rho in enumerate(SCALES)
    ]


# ===========================================
# FORMULAS
# ===========================================
def test_deficits_vanish_on_flat_balls():
    r = 3.0
    volume, area = 4.0 * np.pi * r**3 / 3.0, 4.0 * np.pi * r**2
    assert cv_deficit_normalized(volume, r) == pytest.approx(0.0, abs=1e-12)
    assert iso_deficit(volume, area) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("v, c", [(1.2, 1.0), (10.0, 9.5), (2.0, 2.5)])
def test_form_gap_identity(v, c):
    volume = 4.0 * np.pi * v**3 / 3.0
    assert cv_deficit_normalized(volume, c) - (v - c) == pytest.approx(form_gap_bound(v, c), rel=1e-12)


def test_dimension_three_forms_agree():
    volume, area, capacity = 50.0, 70.0, 2.0
    assert cv_deficit_n(volume, capacity, 3) == pytest.approx(cv_deficit_normalized(volume, capacity))
    assert iso_deficit_n(volume, area, 3) == pytest.approx(iso_deficit(volume, area))


def test_check_tolerance_adds_slack():
    a = CapacityEstimate(1.0, "radial-quadrature", 1e-10)
    b = CapacityEstimate(1.0, "conformal-shift", 2e-10)
    g = CapacityEstimate(2.0, "grid-variational", 1e-3)
    assert check_tolerance(a, b) == pytest.approx(3e-10 + 1e-6)
    assert check_tolerance(a, g) == pytest.approx(1e-10 + 1e-3 + 0.02 * 2.0)


# ===========================================
# RECORDS
# ===========================================
def test_schwarzschild_ball_record(schwarzschild, quad):
    r = 100.0
    record = deficit_record(Ball(radius=r), schwarzschild, [radial_backend], rho=r, quad=quad,
                            with_asymmetry=False)
    assert record.success
    assert record.capacity.value == pytest.approx(r + 0.5, rel=1e-10)
    assert record.cv_deficit_radius == pytest.approx(1.0 + 1.5 / r, abs=5e-3)
    assert record.iso_deficit_alt == pytest.approx(1.0 + 2.5 / r, abs=5e-3)
    assert record.cv_deficit_normalized - record.cv_deficit_radius == pytest.approx(
        form_gap_bound(record.v_radius, record.capacity.value), rel=1e-9, abs=1e-12
    )
    assert record.capacity.value <= record.bray_miao_bound + record.bm_err + 1e-6
    assert record.asymmetry is None


def test_four_dimensional_record_holds_the_normalized_form(quad):
    model = SchwarzschildMetric(mass=2.0, dimension=4)
    record = deficit_record(Ball(radius=100.0), model, [radial_backend], quad=quad, with_asymmetry=False)
    expected = cv_deficit_n(record.volume.value, record.capacity.value, 4)
    assert record.cv_deficit_radius == pytest.approx(expected)
    assert record.cv_deficit_normalized == record.cv_deficit_radius
    assert record.cv_deficit_radius == pytest.approx(2.0, abs=0.01)
    assert "iso_deficit_alt" in record.errors


def test_record_keeps_going_when_a_backend_fails(schwarzschild, quad):
    record = deficit_record(Ball(radius=10.0), schwarzschild, [euclidean_backend], quad=quad,
                            with_asymmetry=False)
    assert not record.success
    assert "capacity:euclidean-closed-form" in record.errors
    assert record.capacity is None
    assert record.cv_deficit_radius is None
    assert record.iso_deficit is not None


def test_record_row_has_every_column(ball_records):
    row = ball_records[0].to_row()
    assert row["j"] == 0
    assert row["rho"] == 100.0
    assert row["capacity"] == pytest.approx(100.5)
    assert set(ball_records[0].to_dict()) >= {"method", "capacities", "errors", "warnings"}


def test_record_asymmetry_of_a_ball(euclidean, quad):
    record = deficit_record(Ball(radius=2.0), euclidean, [euclidean_backend], quad=quad)
    assert record.asymmetry == pytest.approx(0.0, abs=1e-12)


# ===========================================
# EXTRAPOLATION
# ===========================================
def test_extrapolation_recovers_the_limit():
    pairs = [(rho, 2.0 + 3.0 / rho) for rho in (10.0, 20.0, 40.0, 80.0)]
    fit = mass_extrapolate(pairs)
    assert fit.limit == pytest.approx(2.0, abs=1e-10)
    assert fit.slope == pytest.approx(3.0, rel=1e-8)
    assert not fit.diverges


def test_extrapolation_with_log_term():
    pairs = [(rho, 1.0 + (2.0 + 3.0 * np.log(rho)) / rho**2) for rho in (10.0, 20.0, 40.0, 80.0)]
    fit = mass_extrapolate(pairs, power=2.0, log_term=True)
    assert fit.limit == pytest.approx(1.0, abs=1e-9)


def test_linear_growth_is_flagged_as_divergent():
    fit = mass_extrapolate([(rho, 0.1 * rho) for rho in (10.0, 20.0, 40.0, 80.0)])
    assert fit.diverges
    assert fit.linear_slope == pytest.approx(0.1)
    assert any("no finite limit" in w for w in fit.warnings)


def _convergent(gamma, rho0=50.0, count=6, noise=0.0, seed=7):
    rng = np.random.default_rng(seed)
    scales = rho0 * gamma ** np.arange(count)
    return [(rho, 1.0 + 1.5 / rho + 2.0 / rho**2 + noise * rng.standard_normal()) for rho in scales]


@pytest.mark.parametrize("noise", [0.0, 1e-6])
@pytest.mark.parametrize("gamma", [1.1, 1.3, 2.0])
def test_convergent_family_is_neither_divergent_nor_unbracketed(gamma, noise):
    fit = mass_extrapolate(_convergent(gamma, noise=noise))
    assert not fit.diverges
    assert fit.bracketed
    assert fit.limit == pytest.approx(1.0, abs=2e-3)


def test_noisy_convergent_family_keeps_its_limit():
    rng = np.random.default_rng(3)
    scales = 10.0 * 2.0 ** np.arange(6)
    fit = mass_extrapolate([(rho, 1.0 + 1.5 / rho + 1e-5 * rng.standard_normal()) for rho in scales])
    assert not fit.diverges
    assert fit.bracketed
    assert fit.limit == pytest.approx(1.0, abs=1e-3)


def test_logarithmic_growth_is_flagged_as_divergent():
    fit = mass_extrapolate([(rho, 0.3 * np.log(rho)) for rho in (10.0, 20.0, 40.0, 80.0)])
    assert fit.diverges


def test_unstructured_series_is_not_bracketed():
    fit = mass_extrapolate([(1.0, 0.0), (2.0, 100.0), (3.0, -50.0), (4.0, 1000.0)])
    assert not fit.bracketed
    assert fit.spread == pytest.approx(1050.0)
    assert fit.to_dict()["bracketed"] is False


def test_random_series_are_rarely_bracketed():
    rng = np.random.default_rng(2024)
    scales = 10.0 * 2.0 ** np.arange(6)
    bracketed = [
        mass_extrapolate(list(zip(scales, rng.standard_normal(6)))).bracketed
        for _ in range(200)
    ]
    assert np.mean(bracketed) < 0.2


@pytest.mark.parametrize("gamma", [1.1, 1.3])
def test_slowly_growing_ball_exhaustion_converges(schwarzschild, quad, gamma):
    spec = ExhaustionSpec(template=Ball(radius=1.0), rho0=50.0, gamma=gamma, count=6)
    records = [
        deficit_record(spec.member(rho), schwarzschild, [radial_backend], j=j, rho=rho, quad=quad,
                       with_asymmetry=False)
        for j, rho in enumerate(spec.scales)
    ]
    fit = mass_extrapolate(records)
    assert not fit.diverges
    assert fit.bracketed
    assert fit.limit == pytest.approx(1.0, abs=5e-3)


def test_extrapolation_input_validation():
    with pytest.raises(ExhaustionError):
        mass_extrapolate([(1.0, 1.0), (2.0, 1.0)])
    with pytest.raises(ExhaustionError):
        mass_extrapolate([(1.0, 1.0), (3.0, 1.0), (2.0, 1.0)])


def test_mass_report_recovers_schwarzschild_mass(schwarzschild, ball_records):
    spec = ExhaustionSpec(template=Ball(radius=1.0), rho0=100.0, gamma=2.0, count=4)
    report = mass_report(spec.describe(), ball_records, schwarzschild)
    assert set(report.limits) == set(LIMIT_ATTRIBUTES)
    for attribute in LIMIT_ATTRIBUTES:
        assert report.limits[attribute].limit == pytest.approx(1.0, abs=2e-3)
    assert report.adm_reference == 1.0
    assert report.checks["form_identity"].passed
    assert report.checks["bray_miao"].passed
    assert report.passed
    assert report.to_dict()["exhaustion"]["scales"] == SCALES


def test_mass_report_notes_missing_limits(schwarzschild, ball_records):
    report = mass_report({}, ball_records[:2], schwarzschild)
    assert report.limits == {}
    assert len(report.warnings) == len(LIMIT_ATTRIBUTES)


# ===========================================
# CHECKS
# ===========================================
def test_bray_miao_bound_is_sharp_on_schwarzschild_spheres(schwarzschild, quad):
    check = bray_miao_bound(Ball(radius=10.0), schwarzschild, quad=quad)
    assert check.holds
    assert check.margin == pytest.approx(0.0, abs=1e-8)
    assert check.bound == pytest.approx(10.5, rel=1e-12)


def test_bray_miao_bound_is_three_dimensional():
    with pytest.raises(UnsupportedModelError):
        bray_miao_bound(Ball(radius=10.0), SchwarzschildMetric(mass=1.0, dimension=4))


def test_best_capacity_picks_exact_methods(schwarzschild, two_center):
    assert best_capacity(Ball(radius=10.0), schwarzschild).method == "radial-quadrature"
    estimate = best_capacity(Ball(radius=3.0), two_center)
    assert estimate.method == "conformal-shift"
    assert estimate.value == pytest.approx(3.5)


def test_capacity_expansion_residual(schwarzschild, quad):
    r = 1000.0
    assert expansion_check(r, schwarzschild, quad) == pytest.approx(-0.75 / r, rel=0.01)


def test_bounded_spread_limit_stays_below_ceiling(schwarzschild, ball_records):
    check = bounded_spread_check(ball_records, schwarzschild, spread=0.5)
    assert check.passed
    assert check.margin > 0


def test_isocapacitary_check_skips_balls():
    assert quantitative_isocap_check(Ball(radius=1.0)).skipped


def test_isocapacitary_constant_of_an_ellipsoid():
    check = quantitative_isocap_check(Ellipsoid(axes=(2.0, 1.0, 1.0)))
    assert not check.skipped
    assert check.capacity > check.volume_radius
    assert check.constant > 0


def test_higher_dimensional_deficits_tend_to_mass():
    model = SchwarzschildMetric(mass=2.0, dimension=4)
    record = higher_dim_deficits(Ball(radius=100.0), model)
    assert record.dimension == 4
    assert record.capacity == pytest.approx(100.0**2 + 1.0, rel=1e-10)
    assert record.cv_deficit == pytest.approx(2.0, abs=0.01)
    assert record.iso_deficit == pytest.approx(2.0, abs=0.01)


def test_higher_dimensional_deficits_need_centered_balls():
    with pytest.raises(UnsupportedModelError):
        higher_dim_deficits(Ball(radius=10.0, center=(1.0, 0.0, 0.0)), SchwarzschildMetric(mass=1.0))


def test_end_dependence_shift_bound():
    shift = end_dependence_shift(4.0 * np.pi * 1000.0, 5.0)
    assert shift.holds
    assert 0 < shift.shift <= shift.bound


def test_metric_sandwich_for_scaled_metric(schwarzschild, quad):
    check = metric_sandwich_check(Ball(radius=10.0), schwarzschild, schwarzschild.scaled(4.0), quad)
    assert check.Lambda == pytest.approx(2.0)
    assert check.volume_ratio == pytest.approx(1.0 / 8.0)
    assert check.capacity_ratio == pytest.approx(0.5)
    assert check.passed


def test_sandwich_between_different_models(schwarzschild, euclidean, quad):
    check = metric_sandwich_check(Ball(radius=10.0), euclidean, schwarzschild, quad)
    lam = check.Lambda
    assert lam == pytest.approx(1.05**2, rel=1e-12)
    assert lam**-3 <= check.capacity_ratio <= lam**3


@pytest.mark.parametrize("region", [
    Ball(radius=1.0),
    Ellipsoid(axes=(2.0, 1.0, 1.0)),
    Ellipsoid(axes=(5.0, 0.5, 0.2), center=(1.0, -1.0, 0.0)),
])
def test_flat_capacity_dominates_volume_radius(region):
    assert pfs_check(region).passed


def test_equal_volume_ball_radius(schwarzschild, quad):
    volume = schwarzschild.exact_volume(5.0)
    assert equal_volume_ball_radius(volume, schwarzschild, quad) == pytest.approx(5.0, rel=1e-9)


def test_ball_replacement_lowers_capacity(quad):
    result = ball_replacement(Ellipsoid(axes=(6.0, 1.0, 1.0)), EuclideanMetric(), quad=quad)
    assert result.replaced
    assert isinstance(result.region, Ball)
    assert result.capacity_after == pytest.approx(6.0 ** (1.0 / 3.0), rel=1e-9)
    assert result.capacity_after < result.capacity_before


def test_volume_radius_shift_tends_to_three_halves_mass(schwarzschild, quad):
    assert hf_volume_radius_shift(1e4, schwarzschild, quad) == pytest.approx(1.5, abs=1e-3)


def test_star_region_record_in_flat_space(euclidean, quad):
    record = deficit_record(StarShaped(rho=2.0), euclidean, [], quad=quad, with_asymmetry=False)
    assert record.capacity is None
    assert record.v_radius == pytest.approx(2.0, rel=1e-12)
    assert record.iso_deficit == pytest.approx(0.0, abs=1e-9)
