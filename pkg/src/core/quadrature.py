"""
CapMass 1.0 - Quadrature Rules
Product Gauss-Legendre rules on the sphere and on radial intervals.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import integrate

from src.core.errors import QuadratureError
from src.utils.constants import QuadratureConfig


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature orders shared by all functionals."""
    angular_theta: int = QuadratureConfig.ANGULAR_THETA
    angular_phi: int = QuadratureConfig.ANGULAR_PHI
    radial_points: int = QuadratureConfig.RADIAL_POINTS
    tail_radius_factor: float = QuadratureConfig.TAIL_RADIUS_FACTOR

    def coarsened(self) -> "QuadratureSpec":
        """Half-resolution rule used for the two-resolution error estimate."""
        return QuadratureSpec(
            angular_theta=max(2, self.angular_theta // 2),
            angular_phi=max(4, self.angular_phi // 2),
            radial_points=max(2, self.radial_points // 2),
            tail_radius_factor=self.tail_radius_factor,
        )


@dataclass(frozen=True)
class AngularRule:
    """
    Product rule: Gauss-Legendre in mu = cos(theta) times uniform phi.
    Arrays are flattened so that `directions[k]` pairs with `weights[k]`.
    """
    mu: np.ndarray
    phi: np.ndarray
    directions: np.ndarray   # (M, 3) unit vectors
    weights: np.ndarray      # (M,), sums to 4*pi

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=32)
def angular_rule(n_theta: int, n_phi: int) -> AngularRule:
    """Build (and cache) the product rule for the given orders."""
    mu_nodes, mu_weights = np.polynomial.legendre.leggauss(n_theta)
    phi_nodes = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    phi_weight = 2.0 * np.pi / n_phi

    mu, phi = np.meshgrid(mu_nodes, phi_nodes, indexing="ij")
    weights = np.outer(mu_weights, np.full(n_phi, phi_weight))
    sin_theta = np.sqrt(1.0 - mu**2)
    directions = np.stack(
        [sin_theta * np.cos(phi), sin_theta * np.sin(phi), mu], axis=-1
    )
    rule = AngularRule(
        mu=mu.ravel(),
        phi=phi.ravel(),
        directions=directions.reshape(-1, 3),
        weights=weights.ravel(),
    )
    for arr in (rule.mu, rule.phi, rule.directions, rule.weights):
        arr.setflags(write=False)
    return rule


def rule_for(spec: QuadratureSpec) -> AngularRule:
    return angular_rule(spec.angular_theta, spec.angular_phi)


@lru_cache(maxsize=32)
def _legendre_unit(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_nodes(a: np.ndarray, b: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes/weights on many intervals [a_k, b_k] at once.

    Returns:
        (nodes, weights), each of shape a.shape + (n,)
    """
    x, w = _legendre_unit(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def radial_integral(
    func: Callable[[float], float],
    a: float,
    b: float,
    epsrel: float = QuadratureConfig.QUAD_EPSREL,
) -> Tuple[float, float]:
    """
    Adaptive integral of a smooth scalar function on a finite interval.

    Returns:
        (value, absolute error estimate)
    """
    value, error = integrate.quad(
        func, a, b, epsabs=0.0, epsrel=epsrel, limit=QuadratureConfig.QUAD_LIMIT
    )
    if not np.isfinite(value):
        raise QuadratureError(f"non-finite integral on [{a}, {b}]")
    return value, error


def tail_integral(
    func: Callable[[float], float],
    start: float,
    epsrel: float = QuadratureConfig.QUAD_EPSREL,
) -> Tuple[float, float]:
    """
    Integral of func on [start, inf) via the substitution t = start / s.
    The integrand must decay at least like s^-2.
    """
    def mapped(t: float) -> float:
        if t <= 0.0:
            return 0.0
        s = start / t
        return func(s) * start / (t * t)

    return radial_integral(mapped, 0.0, 1.0, epsrel=epsrel)
