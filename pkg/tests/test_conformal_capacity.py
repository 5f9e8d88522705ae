import pytest

from src.core.conformal_capacity import ConformalShiftBackend, capacity_conformal_shift
from src.core.errors import DomainError, UnsupportedModelError
from src.core.grid_capacity import GridSpec
from src.core.manifold import MultiCenterMetric, RadialConformalMetric, SchwarzschildMetric
from src.core.regions import Ball, Ellipsoid, StarShaped


def test_shift_adds_half_the_mass():
    model = MultiCenterMetric(centers=((0.0, 0.0, 0.0), (0.5, 0.5, 0.0)), masses=(1.0, 2.0))
    estimate = capacity_conformal_shift(model, Ball(radius=4.0))
    assert estimate.value == pytest.approx(5.5)
    assert estimate.diagnostics["euclidean_capacity"] == pytest.approx(4.0)


def test_off_center_ball_in_schwarzschild():
    model = SchwarzschildMetric(mass=1.0)
    estimate = capacity_conformal_shift(model, Ball(radius=10.0, center=(0.5, 0.0, 0.0)))
    assert estimate.value == pytest.approx(10.5)


def test_region_must_contain_every_core(two_center):
    with pytest.raises(DomainError):
        capacity_conformal_shift(two_center, Ellipsoid(axes=(3.0, 0.5, 0.5), center=(0.0, 2.0, 0.0)))


def test_general_radial_profiles_are_not_harmonic():
    model = RadialConformalMetric.from_coefficients((0.5, 0.2))
    backend = ConformalShiftBackend()
    assert not backend.is_available(model, Ball(radius=10.0))
    with pytest.raises(UnsupportedModelError):
        backend.estimate(model, Ball(radius=10.0))


def test_higher_dimensions_are_unsupported():
    model = SchwarzschildMetric(mass=1.0, dimension=4)
    assert not ConformalShiftBackend().is_available(model, Ball(radius=10.0))


@pytest.mark.grid
def test_star_regions_use_the_flat_grid_solve(schwarzschild):
    backend = ConformalShiftBackend(grid_spec=GridSpec(grid_n=64))
    estimate = backend.estimate(schwarzschild, StarShaped(rho=2.0))
    assert estimate.diagnostics["euclidean_source"] == "grid"
    assert estimate.value == pytest.approx(2.5, rel=0.05)
