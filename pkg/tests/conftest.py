"""
CapMass 1.0 - Shared Test Fixtures
"""
import pytest

from src.core.manifold import EuclideanMetric, MultiCenterMetric, SchwarzschildMetric
from src.core.quadrature import QuadratureSpec
from src.services.settings import ScenarioSettings


@pytest.fixture
def quad():
    """Modest orders; the tested integrands are resolved well below these."""
    return QuadratureSpec(angular_theta=24, angular_phi=48, radial_points=32)


@pytest.fixture
def schwarzschild():
    return SchwarzschildMetric(mass=1.0)


@pytest.fixture
def euclidean():
    return EuclideanMetric()


@pytest.fixture
def two_center():
    return MultiCenterMetric(centers=((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)), masses=(0.5, 0.5))


@pytest.fixture
def scenario(tmp_path):
    """Settings writing into a temporary run directory, with cheap quadrature."""
    return ScenarioSettings(overrides={
        "output.dir": str(tmp_path),
        "quadrature.angular_theta": 24,
        "quadrature.angular_phi": 48,
        "quadrature.radial_points": 32,
    })
