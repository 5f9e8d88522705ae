import numpy as np
import pytest
from scipy import special

from src.core.capacity import (
    CapacityEstimate,
    backend_registry,
    capacity_normalization,
    euclidean_backend,
    euclidean_capacity,
    select_backends,
)
from src.core.conformal_capacity import ConformalShiftBackend, conformal_backend
from src.core.errors import UnsupportedModelError
from src.core.grid_capacity import GridCapacityBackend
from src.core.manifold import EuclideanMetric
from src.core.radial_capacity import RadialCapacityBackend
from src.core.regions import Ball, Ellipsoid, StarShaped


@pytest.fixture
def registry():
    return backend_registry(RadialCapacityBackend(), ConformalShiftBackend(), euclidean_backend, GridCapacityBackend())


def test_estimate_rejects_nonpositive_values():
    with pytest.raises(ValueError):
        CapacityEstimate(value=0.0, method="test", error_estimate=0.0)


def test_estimate_stores_absolute_error():
    estimate = CapacityEstimate(value=1.0, method="test", error_estimate=-1e-3)
    assert estimate.error_estimate == 1e-3
    assert estimate.to_dict()["method"] == "test"


def test_capacity_normalization():
    assert capacity_normalization(3) == pytest.approx(4.0 * np.pi)
    assert capacity_normalization(4) == pytest.approx(4.0 * np.pi**2)


def test_euclidean_capacity_closed_forms():
    assert euclidean_capacity(Ball(radius=3.0, center=(1.0, 2.0, 3.0))) == 3.0
    assert euclidean_capacity(Ellipsoid(axes=(2.0, 2.0, 2.0))) == pytest.approx(2.0, rel=1e-14)
    expected = 1.0 / special.elliprf(9.0, 4.0, 1.0)
    assert euclidean_capacity(Ellipsoid(axes=(3.0, 2.0, 1.0))) == pytest.approx(expected)


def test_euclidean_capacity_lies_between_ellipsoid_radii():
    ellipsoid = Ellipsoid(axes=(2.0, 1.0, 1.0))
    cap = euclidean_capacity(ellipsoid)
    assert 2.0 ** (1.0 / 3.0) < cap < 2.0


def test_no_closed_form_for_star_regions():
    with pytest.raises(UnsupportedModelError):
        euclidean_capacity(StarShaped(rho=1.0))


def test_euclidean_backend_scales(euclidean):
    estimate = euclidean_backend.estimate(EuclideanMetric(scale=4.0), Ball(radius=3.0))
    assert estimate.value == pytest.approx(6.0)
    assert estimate.method == "euclidean-closed-form"


def test_euclidean_backend_rejects_curved_metrics(schwarzschild):
    assert not euclidean_backend.is_available(schwarzschild, Ball(radius=3.0))
    with pytest.raises(UnsupportedModelError):
        euclidean_backend.estimate(schwarzschild, Ball(radius=3.0))


def test_auto_selection_prefers_exact_methods(schwarzschild, registry):
    chosen = select_backends("auto", schwarzschild, Ball(radius=10.0), registry)
    assert [b.name for b in chosen] == ["radial-quadrature", "conformal-shift"]


def test_auto_selection_falls_back_to_the_grid(two_center, registry):
    region = Ball(radius=0.5, center=(5.0, 0.0, 0.0))
    chosen = select_backends("auto", two_center, region, registry)
    assert [b.name for b in chosen] == ["grid-variational"]


def test_explicit_selection_keeps_order(euclidean, registry):
    chosen = select_backends("euclidean-closed-form, radial-quadrature", euclidean, Ball(radius=1.0), registry)
    assert [b.name for b in chosen] == ["euclidean-closed-form", "radial-quadrature"]


def test_unknown_backend_is_rejected(euclidean, registry):
    with pytest.raises(UnsupportedModelError):
        select_backends("magic", euclidean, Ball(radius=1.0), registry)


def test_conformal_shift_matches_radial(schwarzschild):
    ball = Ball(radius=10.0)
    shifted = conformal_backend.estimate(schwarzschild, ball)
    assert shifted.value == pytest.approx(10.5, rel=1e-14)
    assert shifted.diagnostics["euclidean_source"] == "closed-form"


def test_conformal_shift_of_ellipsoid(schwarzschild):
    ellipsoid = Ellipsoid(axes=(3.0, 2.0, 1.0))
    expected = 1.0 / special.elliprf(9.0, 4.0, 1.0) + 0.5
    assert conformal_backend.estimate(schwarzschild, ellipsoid).value == pytest.approx(expected)


def test_conformal_shift_two_centers(two_center):
    region = Ball(radius=3.0)
    estimate = conformal_backend.estimate(two_center, region)
    assert estimate.value == pytest.approx(3.5)
    assert estimate.diagnostics["mass_shift"] == pytest.approx(0.5)


def test_conformal_shift_scales(schwarzschild):
    estimate = conformal_backend.estimate(schwarzschild.scaled(4.0), Ball(radius=10.0))
    assert estimate.value == pytest.approx(21.0)


def test_conformal_shift_needs_centers_inside(two_center):
    region = Ball(radius=0.5, center=(5.0, 0.0, 0.0))
    assert not conformal_backend.is_available(two_center, region)


def test_conformal_shift_accepts_the_horizon_ball(schwarzschild):
    horizon = Ball(radius=0.5)
    assert conformal_backend.is_available(schwarzschild, horizon)
    assert conformal_backend.estimate(schwarzschild, horizon).value == pytest.approx(1.0)
    assert not conformal_backend.is_available(schwarzschild, Ball(radius=0.5 * (1.0 - 1e-6)))
