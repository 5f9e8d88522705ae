"""
CapMass 1.0 - Capacity Interface
Abstract base class for capacity backends, result types and the Euclidean
closed forms.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage, special

from src.core.errors import UnsupportedModelError
from src.core.manifold import MetricModel, unit_sphere_area
from src.core.quadrature import AngularRule
from src.core.regions import Ball, Ellipsoid, Region


@dataclass
class CapacityEstimate:
    """Result of a capacity computation."""
    value: float
    method: str
    error_estimate: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"capacity must be positive, got {self.value}")
        self.error_estimate = abs(float(self.error_estimate))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "error_estimate": self.error_estimate,
            "diagnostics": self.diagnostics,
        }


@dataclass(eq=False)
class PotentialField:
    """
    Capacitary potential on the lattice center + spacing * (i, j, k),
    i, j, k in [-half_count, half_count]. Nodes inside the region hold 0.
    """
    spacing: float
    center: Tuple[float, float, float]
    half_count: int
    values: np.ndarray
    inside: np.ndarray
    region: Region
    model: MetricModel
    region_radius: float

    @property
    def outer_radius(self) -> float:
        return self.spacing * self.half_count

    @property
    def lower_corner(self) -> np.ndarray:
        return np.asarray(self.center) - self.outer_radius

    def node_coordinates(self) -> np.ndarray:
        axis = (np.arange(2 * self.half_count + 1) - self.half_count) * self.spacing
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        return grid + np.asarray(self.center)

    def _index_coordinates(self, points: np.ndarray) -> np.ndarray:
        return ((np.asarray(points, dtype=float) - self.lower_corner) / self.spacing).T

    def interpolate(self, points: np.ndarray, order: int = 1) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 3)
        out = ndimage.map_coordinates(self.values, self._index_coordinates(flat), order=order, mode="nearest")
        return out.reshape(pts.shape[:-1])

    @cached_property
    def gradient(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.gradient(self.values, self.spacing))

    def interpolate_gradient(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        coords = self._index_coordinates(pts)
        comps = [ndimage.map_coordinates(g, coords, order=1, mode="nearest") for g in self.gradient]
        return np.stack(comps, axis=-1).reshape(np.shape(points))

    def is_radially_monotone(self, rule: AngularRule, samples: int = 16) -> bool:
        """phi non-decreasing along rays through the outer half of the annulus."""
        radii = np.linspace(0.5 * (self.region_radius + self.outer_radius), 0.95 * self.outer_radius, samples)
        pts = np.asarray(self.center) + radii[:, None, None] * rule.directions[None, :, :]
        phi = self.interpolate(pts)
        return bool(np.all(np.diff(phi, axis=0) >= -1e-9))

    def export(self, path: Path) -> Path:
        """Write (i, j, k, phi) as CSV, or the raw array for a .npy path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".npy":
            np.save(path, self.values)
            return path
        idx = np.indices(self.values.shape).reshape(3, -1) - self.half_count
        frame = pd.DataFrame(
            {"i": idx[0], "j": idx[1], "k": idx[2], "phi": self.values.ravel()}
        )
        frame.to_csv(path, index=False, float_format="%.12g")
        return path


class BaseCapacityBackend(ABC):
    """
    Abstract base class for capacity methods.
    Implementations must provide estimate().
    """

    @abstractmethod
    def estimate(self, model: MetricModel, region: Region) -> CapacityEstimate:
        """
        Compute the capacity of a region.

        Args:
            model: metric model
            region: compact region containing every excised ball

        Returns:
            CapacityEstimate with value, error estimate and diagnostics
        """
        pass

    @abstractmethod
    def is_available(self, model: MetricModel, region: Region) -> bool:
        """
        Check if this method applies to the model/region pair.

        Returns:
            True if estimate() can be called
        """
        pass

    @property
    @abstractmethod
    def name(self) -> str:
        """Method tag reported in results."""
        pass


def capacity_normalization(n: int) -> float:
    """(n-2) omega_{n-1}; 4 pi in dimension 3."""
    return (n - 2) * unit_sphere_area(n)


def euclidean_capacity(region: Region) -> float:
    """
    Closed forms: a ball's capacity is its radius; an ellipsoid's is
    1 / R_F(a^2, b^2, c^2) with Carlson's symmetric integral.
    """
    if isinstance(region, Ball):
        return region.radius
    if isinstance(region, Ellipsoid):
        a, b, c = region.axes
        return float(1.0 / special.elliprf(a**2, b**2, c**2))
    raise UnsupportedModelError(f"no closed-form Euclidean capacity for {region.shape} regions")


class EuclideanClosedFormBackend(BaseCapacityBackend):
    """Closed-form capacity of balls and ellipsoids in (scaled) Euclidean space."""

    @property
    def name(self) -> str:
        return "euclidean-closed-form"

    def is_available(self, model: MetricModel, region: Region) -> bool:
        return model.kind == "euclidean" and model.dimension == 3 and isinstance(region, (Ball, Ellipsoid))

    def estimate(self, model: MetricModel, region: Region) -> CapacityEstimate:
        if not self.is_available(model, region):
            raise UnsupportedModelError(f"{self.name} needs a Euclidean ball or ellipsoid")
        value = np.sqrt(model.scale) * euclidean_capacity(region)
        return CapacityEstimate(value=value, method=self.name, error_estimate=1e-14 * value)


# Global instance
euclidean_backend = EuclideanClosedFormBackend()


def select_backends(names: str, model: MetricModel, region: Region, available: dict) -> list:
    """
    Resolve the `capacity.backends` setting.

    Args:
        names: "auto" or a comma-separated list of method tags
        available: tag -> backend instance

    Returns:
        backends in the requested order; "auto" keeps the applicable ones
        except the grid solver when an exact method applies
    """
    if names.strip() == "auto":
        chosen = [b for b in available.values() if b.is_available(model, region)]
        exact = [b for b in chosen if b.name != "grid-variational"]
        return exact or chosen
    chosen = []
    for tag in (s.strip() for s in names.split(",") if s.strip()):
        if tag not in available:
            raise UnsupportedModelError(f"unknown capacity backend '{tag}'")
        chosen.append(available[tag])
    return chosen


def backend_registry(*backends: Optional[BaseCapacityBackend]) -> dict:
    return {b.name: b for b in backends if b is not None}
