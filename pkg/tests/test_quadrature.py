import numpy as np
import pytest

from src.core.quadrature import (
    QuadratureSpec,
    angular_rule,
    gauss_nodes,
    radial_integral,
    rule_for,
    tail_integral,
)


def test_angular_rule_weights_cover_the_sphere():
    rule = angular_rule(16, 32)
    assert rule.size == 16 * 32
    assert np.sum(rule.weights) == pytest.approx(4.0 * np.pi, rel=1e-13)
    assert np.allclose(np.linalg.norm(rule.directions, axis=-1), 1.0)


def test_angular_rule_integrates_low_degree_polynomials():
    rule = angular_rule(8, 16)
    x, y, z = rule.directions.T
    assert np.sum(rule.weights * z**2) == pytest.approx(4.0 * np.pi / 3.0, rel=1e-13)
    assert np.sum(rule.weights * x**2 * y**2) == pytest.approx(4.0 * np.pi / 15.0, rel=1e-12)
    assert abs(np.sum(rule.weights * x * z)) < 1e-13


def test_angular_rule_is_cached_and_read_only():
    rule = angular_rule(6, 12)
    assert angular_rule(6, 12) is rule
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


def test_rule_for_uses_spec_orders():
    spec = QuadratureSpec(angular_theta=10, angular_phi=20)
    assert rule_for(spec).size == 200


def test_coarsened_halves_orders_with_floors():
    spec = QuadratureSpec(angular_theta=64, angular_phi=128, radial_points=64)
    coarse = spec.coarsened()
    assert (coarse.angular_theta, coarse.angular_phi, coarse.radial_points) == (32, 64, 32)
    tiny = QuadratureSpec(angular_theta=2, angular_phi=4, radial_points=2).coarsened()
    assert (tiny.angular_theta, tiny.angular_phi, tiny.radial_points) == (2, 4, 2)


def test_gauss_nodes_on_many_intervals():
    a = np.array([0.0, 1.0, -2.0])
    b = np.array([1.0, 3.0, 2.0])
    nodes, weights = gauss_nodes(a, b, 5)
    assert nodes.shape == (3, 5)
    integrals = np.sum(weights * nodes**4, axis=-1)
    assert np.allclose(integrals, (b**5 - a**5) / 5.0, rtol=1e-13)


def test_radial_integral_of_smooth_function():
    value, error = radial_integral(np.exp, 0.0, 1.0)
    assert value == pytest.approx(np.e - 1.0, rel=1e-13)
    assert error < 1e-10


def test_tail_integral_of_inverse_square():
    value, _ = tail_integral(lambda s: 1.0 / s**2, 2.0)
    assert value == pytest.approx(0.5, rel=1e-12)
