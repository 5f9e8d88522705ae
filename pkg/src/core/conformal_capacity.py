"""
CapMass 1.0 - Conformal Shift Capacity
Capacity in harmonically conformal metrics from the Euclidean capacity.
"""
import logging
from typing import Optional

import numpy as np

from src.core.capacity import BaseCapacityBackend, CapacityEstimate, euclidean_capacity
from src.core.errors import DomainError, UnsupportedModelError
from src.core.grid_capacity import GridSpec, capacity_grid
from src.core.manifold import EuclideanMetric, MetricModel
from src.core.regions import Ball, Ellipsoid, Region

logger = logging.getLogger(__name__)

SUPPORTED_KINDS = ("euclidean", "schwarzschild", "multicenter")


class ConformalShiftBackend(BaseCapacityBackend):
    """
    When U = 1 + sum m_i / (2|x - p_i|) is harmonic outside K (every center
    inside K), U * phi is the Euclidean potential of K and

        cap_g(K) = sqrt(lambda) * (cap_0(K) + sum m_i / 2).

    cap_0 comes from a closed form for balls and ellipsoids and from the
    grid solver on flat space otherwise.
    """

    def __init__(self, grid_spec: Optional[GridSpec] = None):
        self.grid_spec = grid_spec or GridSpec()

    @property
    def name(self) -> str:
        return "conformal-shift"

    def is_available(self, model: MetricModel, region: Region) -> bool:
        if model.kind not in SUPPORTED_KINDS or model.dimension != 3:
            return False
        return all(region.contains_ball(b.center, b.radius) for b in model.excised_balls())

    def estimate(self, model: MetricModel, region: Region) -> CapacityEstimate:
        if model.kind not in SUPPORTED_KINDS or model.dimension != 3:
            raise UnsupportedModelError(
                f"{self.name} needs a three-dimensional harmonically flat metric, got {model.kind}"
            )
        for ball in model.excised_balls():
            if not region.contains_ball(ball.center, ball.radius):
                raise DomainError(
                    f"center {tuple(ball.center)} with core radius {ball.radius:.6g} "
                    "is not inside the region; U is not harmonic outside it"
                )

        if isinstance(region, (Ball, Ellipsoid)):
            flat = euclidean_capacity(region)
            flat_error = 1e-14 * flat
            source = "closed-form"
        else:
            grid_estimate, _ = capacity_grid(EuclideanMetric(), region, self.grid_spec)
            flat, flat_error = grid_estimate.value, grid_estimate.error_estimate
            source = "grid"

        root_scale = np.sqrt(model.scale)
        shift = 0.5 * model.mass_coefficient()
        value = root_scale * (flat + shift)
        logger.debug("cap_0 = %.12g (%s), shift %.12g", flat, source, shift)
        return CapacityEstimate(
            value=value,
            method=self.name,
            error_estimate=root_scale * flat_error + 1e-14 * value,
            diagnostics={"euclidean_capacity": flat, "euclidean_source": source, "mass_shift": shift},
        )


# Global instance
conformal_backend = ConformalShiftBackend()


def capacity_conformal_shift(model: MetricModel, region: Region) -> CapacityEstimate:
    return conformal_backend.estimate(model, region)
