import pytest

from src.core.errors import DomainError, UnsupportedModelError
from src.core.manifold import RadialConformalMetric, SchwarzschildMetric
from src.core.radial_capacity import RadialCapacityBackend, capacity_radial, radial_backend
from src.core.regions import Ball, Ellipsoid


@pytest.mark.parametrize("mass, r", [(0.0, 1.0), (1.0, 0.5), (1.0, 10.0), (2.0, 1000.0)])
def test_schwarzschild_capacity_is_exact(mass, r):
    model = SchwarzschildMetric(mass=mass)
    estimate = capacity_radial(model, r)
    assert estimate.value == pytest.approx(model.exact_capacity(r), rel=1e-10)
    assert estimate.error_estimate < 1e-8 * estimate.value


def test_higher_dimensional_capacity_is_exact():
    model = SchwarzschildMetric(mass=2.0, dimension=4)
    assert capacity_radial(model, 3.0).value == pytest.approx(model.exact_capacity(3.0), rel=1e-10)


def test_capacity_of_a_scaled_metric(schwarzschild):
    assert capacity_radial(schwarzschild.scaled(4.0), 10.0).value == pytest.approx(21.0, rel=1e-10)


def test_general_profile_capacity_exceeds_radius():
    model = RadialConformalMetric.from_coefficients((0.5, 0.2))
    cap = capacity_radial(model, 10.0).value
    assert 10.0 < cap < 11.0


def test_ball_inside_excised_radius_is_rejected(schwarzschild):
    with pytest.raises(DomainError):
        capacity_radial(schwarzschild, 0.4)
    with pytest.raises(DomainError):
        capacity_radial(schwarzschild, -1.0)


def test_availability(schwarzschild, two_center):
    assert radial_backend.is_available(schwarzschild, Ball(radius=2.0))
    assert not radial_backend.is_available(schwarzschild, Ball(radius=2.0, center=(0.1, 0.0, 0.0)))
    assert not radial_backend.is_available(schwarzschild, Ellipsoid(axes=(3.0, 2.0, 1.0)))
    assert not radial_backend.is_available(two_center, Ball(radius=3.0))


def test_non_radial_models_are_unsupported(two_center):
    with pytest.raises(UnsupportedModelError):
        capacity_radial(two_center, 3.0)
    with pytest.raises(UnsupportedModelError):
        RadialCapacityBackend().estimate(two_center, Ball(radius=3.0))
