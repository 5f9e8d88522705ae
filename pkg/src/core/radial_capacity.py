"""
CapMass 1.0 - Radial Capacity
Exact capacity of centered balls in rotationally symmetric metrics.
"""
import logging

import numpy as np

from src.core.capacity import BaseCapacityBackend, CapacityEstimate
from src.core.errors import DomainError, UnsupportedModelError
from src.core.manifold import MetricModel
from src.core.quadrature import radial_integral, tail_integral
from src.core.regions import Ball, Region
from src.utils.constants import QuadratureConfig

logger = logging.getLogger(__name__)


class RadialCapacityBackend(BaseCapacityBackend):
    """
    For g = f(|x|) delta the capacitary potential depends on |x| only and

        cap(B_r) = 1 / ((n-2) * int_r^inf ds / (s^{n-1} f(s)^{(n-2)/2})).

    The integral is split at a tail radius; the tail uses t = R_tail / s.
    """

    def __init__(self, tail_radius_factor: float = QuadratureConfig.TAIL_RADIUS_FACTOR):
        self.tail_radius_factor = tail_radius_factor

    @property
    def name(self) -> str:
        return "radial-quadrature"

    def is_available(self, model: MetricModel, region: Region) -> bool:
        return (
            model.is_rotationally_symmetric
            and isinstance(region, Ball)
            and np.allclose(region.center, 0.0)
        )

    def estimate(self, model: MetricModel, region: Region) -> CapacityEstimate:
        if not self.is_available(model, region):
            raise UnsupportedModelError(f"{self.name} needs a centered ball in a radial metric")
        return self.capacity(model, region.radius)

    def capacity(self, model: MetricModel, r: float) -> CapacityEstimate:
        if r <= 0:
            raise DomainError(f"radius must be positive, got {r}")
        if r < model.inner_radius * (1.0 - 1e-12):
            raise DomainError(
                f"ball of radius {r:.6g} lies inside the excised radius {model.inner_radius:.6g}"
            )

        n = model.dimension
        half = (n - 2) / 2.0

        def integrand(s: float) -> float:
            return 1.0 / (s ** (n - 1) * float(model.metric_factor_radial(s)) ** half)

        tail_radius = max(self.tail_radius_factor * max(model.adm_mass(), 1.0), 2.0 * r)
        inner, inner_err = radial_integral(integrand, r, tail_radius)
        outer, outer_err = tail_integral(integrand, tail_radius)
        total = inner + outer

        value = 1.0 / ((n - 2) * total)
        error = value * (inner_err + outer_err) / total + 1e-14 * value
        logger.debug("cap(B_%.6g) = %.15g (tail at %.6g)", r, value, tail_radius)
        return CapacityEstimate(
            value=value,
            method=self.name,
            error_estimate=error,
            diagnostics={"tail_radius": tail_radius, "inner_integral": inner, "tail_integral": outer},
        )


# Global instance
radial_backend = RadialCapacityBackend()


def capacity_radial(model: MetricModel, r: float) -> CapacityEstimate:
    """Capacity of the centered coordinate ball of radius r."""
    if not model.is_rotationally_symmetric:
        raise UnsupportedModelError(f"{model.kind} metrics are not rotationally symmetric")
    return radial_backend.capacity(model, r)
