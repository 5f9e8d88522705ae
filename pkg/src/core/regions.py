"""
CapMass 1.0 - Regions
Compact coordinate regions, their Euclidean geometry, Fraenkel asymmetry
and exhaustion families.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import factorial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, ndimage, optimize, special

from src.core.errors import ExhaustionError, RegionError
from src.core.quadrature import AngularRule, QuadratureSpec, rule_for
from src.utils.constants import EXHAUSTION_RULES, MassConfig, QuadratureConfig


logger = logging.getLogger(__name__)

Vector = Tuple[float, float, float]
ORIGIN: Vector = (0.0, 0.0, 0.0)
CONTAINMENT_RTOL = 1e-9


def _vec(values: Sequence[float]) -> Vector:
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise RegionError(f"expected a coordinate triple, got {values}")
    return values


@dataclass(frozen=True)
class BoundarySamples:
    """
    Quadrature samples of a closed surface.

    `weights` integrate against the Euclidean area element. `mean_curvature`
    is the Euclidean mean curvature (sum of principal curvatures, positive on
    round spheres) or None when the surface is not smooth enough to have one.
    """
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    mean_curvature: Optional[np.ndarray] = None


class Region(ABC):
    """Compact region of R^3 with nonempty interior. Instances are immutable."""

    @property
    @abstractmethod
    def shape(self) -> str:
        pass

    @abstractmethod
    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the region."""
        pass

    @abstractmethod
    def level_set(self, points: np.ndarray) -> np.ndarray:
        """Signed function, negative inside, zero on the boundary."""
        pass

    @abstractmethod
    def boundary_samples(self, rule: AngularRule) -> BoundarySamples:
        pass

    @abstractmethod
    def euclidean_volume(self) -> float:
        pass

    @abstractmethod
    def euclidean_perimeter(self) -> float:
        pass

    @abstractmethod
    def radial_extent(self) -> Tuple[float, float]:
        """(min, max) of |x| over the boundary."""
        pass

    @abstractmethod
    def inner_width(self) -> float:
        """Width of the thinnest feature."""
        pass

    @abstractmethod
    def centroid(self) -> np.ndarray:
        pass

    @abstractmethod
    def scaled(self, factor: float) -> "Region":
        """Image under x -> factor * x."""
        pass

    @abstractmethod
    def translated(self, offset: Sequence[float]) -> "Region":
        pass

    @abstractmethod
    def params(self) -> dict:
        pass

    # Star-shaped representation used by ray integration
    @property
    def star_center(self) -> np.ndarray:
        raise RegionError(f"{self.shape} region has no star-shaped parametrization")

    def boundary_radius(self, directions: np.ndarray) -> np.ndarray:
        """Distance from star_center to the boundary along unit directions."""
        raise RegionError(f"{self.shape} region has no star-shaped parametrization")

    @property
    def is_star_shaped(self) -> bool:
        return True

    def bounding_radius(self) -> float:
        """max |x| over the region."""
        return self.radial_extent()[1]

    def extent_from(self, center: Sequence[float]) -> float:
        """max |x - center| over the region."""
        return self.translated(-np.asarray(center, dtype=float)).bounding_radius()

    def contains_ball(self, center: Sequence[float], radius: float) -> bool:
        """Whether the closed ball lies in the region, up to a relative tolerance on its radius."""
        c = np.asarray(center, dtype=float)
        rule = rule_for(QuadratureSpec(angular_theta=24, angular_phi=48))
        shell = c + radius * (1.0 - CONTAINMENT_RTOL) * rule.directions
        return bool(self.contains(c[None, :])[0] and np.all(self.contains(shell)))

    def describe(self) -> dict:
        return {"shape": self.shape, **self.params()}


# ===========================================
# BALL
# ===========================================
@dataclass(frozen=True)
class Ball(Region):
    radius: float
    center: Vector = ORIGIN

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise RegionError(f"ball radius must be positive, got {self.radius}")

    @property
    def shape(self) -> str:
        return "ball"

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.level_set(points) <= 0

    def level_set(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(points, dtype=float) - self._c, axis=-1) - self.radius

    def boundary_samples(self, rule: AngularRule) -> BoundarySamples:
        return BoundarySamples(
            points=self._c + self.radius * rule.directions,
            weights=self.radius**2 * rule.weights,
            normals=np.array(rule.directions),
            mean_curvature=np.full(rule.size, 2.0 / self.radius),
        )

    def euclidean_volume(self) -> float:
        return 4.0 * np.pi * self.radius**3 / 3.0

    def euclidean_perimeter(self) -> float:
        return 4.0 * np.pi * self.radius**2

    def radial_extent(self) -> Tuple[float, float]:
        d = float(np.linalg.norm(self._c))
        return abs(self.radius - d), self.radius + d

    def inner_width(self) -> float:
        return 2.0 * self.radius

    def centroid(self) -> np.ndarray:
        return np.array(self._c)

    def scaled(self, factor: float) -> "Ball":
        return Ball(radius=self.radius * factor, center=tuple(self._c * factor))

    def translated(self, offset: Sequence[float]) -> "Ball":
        return Ball(radius=self.radius, center=tuple(self._c + np.asarray(offset, dtype=float)))

    def params(self) -> dict:
        return {"radius": self.radius, "center": list(self.center)}

    @property
    def star_center(self) -> np.ndarray:
        return np.array(self._c)

    def boundary_radius(self, directions: np.ndarray) -> np.ndarray:
        return np.full(np.shape(directions)[:-1], self.radius)


# ===========================================
# ELLIPSOID
# ===========================================
@dataclass(frozen=True)
class Ellipsoid(Region):
    """Axis-aligned ellipsoid with semi-axes a >= b >= c > 0."""
    axes: Vector
    center: Vector = ORIGIN

    def __post_init__(self):
        object.__setattr__(self, "axes", _vec(self.axes))
        object.__setattr__(self, "center", _vec(self.center))
        a, b, c = self.axes
        if not (a >= b >= c > 0):
            raise RegionError(f"ellipsoid semi-axes must satisfy a >= b >= c > 0, got {self.axes}")

    @property
    def shape(self) -> str:
        return "ellipsoid"

    @property
    def _a(self) -> np.ndarray:
        return np.asarray(self.axes)

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def is_sphere(self) -> bool:
        a, b, c = self.axes
        return a == b == c

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.level_set(points) <= 0

    def level_set(self, points: np.ndarray) -> np.ndarray:
        y = (np.asarray(points, dtype=float) - self._c) / self._a
        return (np.linalg.norm(y, axis=-1) - 1.0) * self.axes[2]

    def boundary_samples(self, rule: AngularRule) -> BoundarySamples:
        a = self._a
        local = rule.directions * a
        grad = local / a**2
        norm = np.linalg.norm(grad, axis=-1)
        mu, phi = rule.mu, rule.phi
        one_minus = 1.0 - mu**2
        jac = np.sqrt(
            a[1] ** 2 * a[2] ** 2 * one_minus * np.cos(phi) ** 2
            + a[0] ** 2 * a[2] ** 2 * one_minus * np.sin(phi) ** 2
            + a[0] ** 2 * a[1] ** 2 * mu**2
        )
        inv2 = 1.0 / a**2
        curvature = (norm**2 * inv2.sum() - np.sum(grad**2 * inv2, axis=-1)) / norm**3
        return BoundarySamples(
            points=self._c + local,
            weights=rule.weights * jac,
            normals=grad / norm[:, None],
            mean_curvature=curvature,
        )

    def euclidean_volume(self) -> float:
        a, b, c = self.axes
        return 4.0 * np.pi * a * b * c / 3.0

    def euclidean_perimeter(self) -> float:
        a, b, c = self.axes
        if self.is_sphere:
            return 4.0 * np.pi * a**2

        def integrand(phi, mu):
            one_minus = 1.0 - mu**2
            return np.sqrt(
                b**2 * c**2 * one_minus * np.cos(phi) ** 2
                + a**2 * c**2 * one_minus * np.sin(phi) ** 2
                + a**2 * b**2 * mu**2
            )

        # one octant by symmetry
        value, _ = integrate.dblquad(
            integrand, 0.0, 1.0, 0.0, np.pi / 2.0, epsabs=0.0, epsrel=1e-12
        )
        return 8.0 * value

    def radial_extent(self) -> Tuple[float, float]:
        if np.allclose(self._c, 0.0):
            return self.axes[2], self.axes[0]
        return _sampled_extent(self)

    def inner_width(self) -> float:
        return 2.0 * self.axes[2]

    def centroid(self) -> np.ndarray:
        return np.array(self._c)

    def scaled(self, factor: float) -> "Ellipsoid":
        return Ellipsoid(axes=tuple(self._a * factor), center=tuple(self._c * factor))

    def translated(self, offset: Sequence[float]) -> "Ellipsoid":
        return Ellipsoid(axes=self.axes, center=tuple(self._c + np.asarray(offset, dtype=float)))

    def params(self) -> dict:
        return {"axes": list(self.axes), "center": list(self.center)}

    @property
    def star_center(self) -> np.ndarray:
        return np.array(self._c)

    def boundary_radius(self, directions: np.ndarray) -> np.ndarray:
        return 1.0 / np.linalg.norm(np.asarray(directions) / self._a, axis=-1)


# ===========================================
# STAR-SHAPED RADIAL GRAPH
# ===========================================
Mode = Tuple[int, int, float]


def real_spherical_harmonic(l: int, m: int, mu: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Orthonormal real harmonic: cos(m phi) for m >= 0, sin(|m| phi) for m < 0."""
    am = abs(m)
    if am > l:
        raise RegionError(f"invalid harmonic order l={l}, m={m}")
    norm = np.sqrt((2 * l + 1) / (4.0 * np.pi) * factorial(l - am) / factorial(l + am))
    legendre = special.lpmv(am, l, mu)
    if m == 0:
        return norm * legendre
    trig = np.cos(am * phi) if m > 0 else np.sin(am * phi)
    return np.sqrt(2.0) * norm * legendre * trig


@dataclass(frozen=True)
class StarShaped(Region):
    """
    Boundary r(theta, phi) = rho + alpha * s(theta, phi) around `center`.

    s is a combination of real spherical harmonics (optionally its absolute
    value) rescaled to [0, 1] over a dense angular grid.
    """
    rho: float
    alpha: float = 0.0
    modes: Tuple[Mode, ...] = ()
    absolute: bool = False
    center: Vector = ORIGIN
    _range: Tuple[float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        object.__setattr__(
            self, "modes", tuple((int(l), int(m), float(c)) for l, m, c in self.modes)
        )
        if not self.rho > 0:
            raise RegionError(f"star-shaped base radius must be positive, got {self.rho}")
        if self.alpha < 0:
            raise RegionError(f"perturbation amplitude must be nonnegative, got {self.alpha}")
        for l, m, _ in self.modes:
            if l < 0 or abs(m) > l:
                raise RegionError(f"invalid harmonic mode ({l}, {m})")
        object.__setattr__(self, "_range", self._profile_range())

    @property
    def shape(self) -> str:
        return "star"

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center)

    def _raw_profile(self, mu: np.ndarray, phi: np.ndarray) -> np.ndarray:
        total = np.zeros(np.broadcast(mu, phi).shape)
        for l, m, coeff in self.modes:
            total = total + coeff * real_spherical_harmonic(l, m, mu, phi)
        return np.abs(total) if self.absolute else total

    def _profile_range(self) -> Tuple[float, float]:
        theta = np.linspace(0.0, np.pi, QuadratureConfig.PROFILE_SAMPLES_THETA)
        phi = np.linspace(0.0, 2.0 * np.pi, QuadratureConfig.PROFILE_SAMPLES_PHI, endpoint=False)
        mu, ph = np.meshgrid(np.cos(theta), phi, indexing="ij")
        values = self._raw_profile(mu, ph)
        return float(values.min()), float(values.max())

    def profile(self, mu: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Normalized profile s in [0, 1]."""
        lo, hi = self._range
        if hi - lo <= 1e-14:
            return np.zeros(np.broadcast(mu, phi).shape)
        return np.clip((self._raw_profile(mu, phi) - lo) / (hi - lo), 0.0, 1.0)

    def radius_at(self, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return self.rho + self.alpha * self.profile(np.cos(theta), phi)

    def boundary_radius(self, directions: np.ndarray) -> np.ndarray:
        d = np.asarray(directions, dtype=float)
        mu = np.clip(d[..., 2], -1.0, 1.0)
        phi = np.arctan2(d[..., 1], d[..., 0])
        return self.rho + self.alpha * self.profile(mu, phi)

    @property
    def star_center(self) -> np.ndarray:
        return np.array(self._c)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.level_set(points) <= 0

    def level_set(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points, dtype=float) - self._c
        dist = np.linalg.norm(rel, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist[..., None] > 0, rel / dist[..., None], np.array([0.0, 0.0, 1.0]))
        return dist - self.boundary_radius(unit)

    def boundary_samples(self, rule: AngularRule) -> BoundarySamples:
        theta = np.arccos(rule.mu)
        phi = rule.phi
        h = 1e-4

        r = self.radius_at(theta, phi)
        r_t = (self.radius_at(theta + h, phi) - self.radius_at(theta - h, phi)) / (2 * h)
        r_p = (self.radius_at(theta, phi + h) - self.radius_at(theta, phi - h)) / (2 * h)
        r_tt = (self.radius_at(theta + h, phi) - 2 * r + self.radius_at(theta - h, phi)) / h**2
        r_pp = (self.radius_at(theta, phi + h) - 2 * r + self.radius_at(theta, phi - h)) / h**2
        r_tp = (
            self.radius_at(theta + h, phi + h)
            - self.radius_at(theta + h, phi - h)
            - self.radius_at(theta - h, phi + h)
            + self.radius_at(theta - h, phi - h)
        ) / (4 * h**2)

        st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
        zero = np.zeros_like(theta)
        w = np.stack([st * cp, st * sp, ct], axis=-1)
        w_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
        w_p = np.stack([-st * sp, st * cp, zero], axis=-1)
        w_tp = np.stack([-ct * sp, ct * cp, zero], axis=-1)
        w_pp = np.stack([-st * cp, -st * sp, zero], axis=-1)

        x_t = r_t[:, None] * w + r[:, None] * w_t
        x_p = r_p[:, None] * w + r[:, None] * w_p
        x_tt = r_tt[:, None] * w + 2 * r_t[:, None] * w_t - r[:, None] * w
        x_tp = r_tp[:, None] * w + r_t[:, None] * w_p + r_p[:, None] * w_t + r[:, None] * w_tp
        x_pp = r_pp[:, None] * w + 2 * r_p[:, None] * w_p + r[:, None] * w_pp

        cross = np.cross(x_t, x_p)
        jac = np.linalg.norm(cross, axis=-1)
        normal = cross / jac[:, None]

        E = np.sum(x_t * x_t, axis=-1)
        F = np.sum(x_t * x_p, axis=-1)
        G = np.sum(x_p * x_p, axis=-1)
        L = np.sum(x_tt * normal, axis=-1)
        M = np.sum(x_tp * normal, axis=-1)
        N = np.sum(x_pp * normal, axis=-1)
        curvature = -(E * N - 2 * F * M + G * L) / (E * G - F**2)

        return BoundarySamples(
            points=self._c + r[:, None] * w,
            weights=rule.weights * jac / st,
            normals=normal,
            mean_curvature=curvature,
        )

    def euclidean_volume(self, quad: Optional[QuadratureSpec] = None) -> float:
        rule = rule_for(quad or QuadratureSpec())
        r = self.boundary_radius(rule.directions)
        return float(np.sum(rule.weights * r**3) / 3.0)

    def euclidean_perimeter(self, quad: Optional[QuadratureSpec] = None) -> float:
        if self.alpha == 0:
            return 4.0 * np.pi * self.rho**2
        samples = self.boundary_samples(rule_for(quad or QuadratureSpec()))
        return float(np.sum(samples.weights))

    def radial_extent(self) -> Tuple[float, float]:
        if np.allclose(self._c, 0.0):
            theta = np.linspace(0.0, np.pi, QuadratureConfig.PROFILE_SAMPLES_THETA)
            phi = np.linspace(0.0, 2.0 * np.pi, QuadratureConfig.PROFILE_SAMPLES_PHI, endpoint=False)
            t, p = np.meshgrid(theta, phi, indexing="ij")
            r = self.radius_at(t, p)
            return float(r.min()), float(r.max())
        return _sampled_extent(self)

    def inner_width(self) -> float:
        return 2.0 * self.rho

    def centroid(self) -> np.ndarray:
        rule = rule_for(QuadratureSpec())
        r = self.boundary_radius(rule.directions)
        moment = np.sum((rule.weights * r**4 / 4.0)[:, None] * rule.directions, axis=0)
        volume = np.sum(rule.weights * r**3) / 3.0
        return self._c + moment / volume

    def scaled(self, factor: float) -> "StarShaped":
        return replace(
            self, rho=self.rho * factor, alpha=self.alpha * factor, center=tuple(self._c * factor)
        )

    def translated(self, offset: Sequence[float]) -> "StarShaped":
        return replace(self, center=tuple(self._c + np.asarray(offset, dtype=float)))

    def params(self) -> dict:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "modes": [list(m) for m in self.modes],
            "absolute": self.absolute,
            "center": list(self.center),
        }


# ===========================================
# VOXEL SET
# ===========================================
@dataclass(frozen=True, eq=False)
class VoxelSet(Region):
    """
    Union of cubes origin + h*(i, j, k) + [0, h]^3 for occupied cells.
    """
    origin: Vector
    spacing: float
    occupancy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec(self.origin))
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3:
            raise RegionError("voxel occupancy must be a 3D array")
        if not occ.any():
            raise RegionError("voxel set is empty")
        if not self.spacing > 0:
            raise RegionError("voxel spacing must be positive")
        occ = occ.copy()
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def shape(self) -> str:
        return "voxel"

    @property
    def is_star_shaped(self) -> bool:
        return False

    @property
    def _o(self) -> np.ndarray:
        return np.asarray(self.origin)

    def cell_centers(self) -> np.ndarray:
        idx = np.argwhere(self.occupancy)
        return self._o + (idx + 0.5) * self.spacing

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        idx = np.floor((pts - self._o) / self.spacing).astype(np.int64)
        dims = np.asarray(self.occupancy.shape)
        inside = np.all((idx >= 0) & (idx < dims), axis=-1)
        result = np.zeros(pts.shape[:-1], dtype=bool)
        safe = np.where(inside[..., None], idx, 0)
        result[inside] = self.occupancy[safe[..., 0], safe[..., 1], safe[..., 2]][inside]
        return result

    def level_set(self, points: np.ndarray) -> np.ndarray:
        return np.where(self.contains(points), -1.0, 1.0)

    def _exposed_faces(self):
        """Centers, outward axis normals and neighborhood normals of exposed faces."""
        padded = np.pad(self.occupancy, 1).astype(float)
        smooth = np.stack([ndimage.sobel(padded, axis=a) for a in range(3)], axis=-1)
        centers, axis_normals, estimated = [], [], []
        occ = np.pad(self.occupancy, 1)
        for axis in range(3):
            for sign in (-1, 1):
                neighbour = np.roll(occ, -sign, axis=axis)
                exposed = occ & ~neighbour
                idx = np.argwhere(exposed)
                if len(idx) == 0:
                    continue
                e = np.zeros(3)
                e[axis] = sign
                centers.append(self._o + (idx - 1 + 0.5 + 0.5 * e) * self.spacing)
                axis_normals.append(np.tile(e, (len(idx), 1)))
                grad = -smooth[idx[:, 0], idx[:, 1], idx[:, 2]]
                estimated.append(grad)
        centers = np.concatenate(centers)
        axis_normals = np.concatenate(axis_normals)
        estimated = np.concatenate(estimated)
        norm = np.linalg.norm(estimated, axis=-1)
        fallback = norm < 1e-12
        estimated = np.where(fallback[:, None], axis_normals, estimated / np.where(fallback, 1.0, norm)[:, None])
        return centers, axis_normals, estimated

    def boundary_samples(self, rule: Optional[AngularRule] = None) -> BoundarySamples:
        """
        Exposed voxel faces. Each face's area h^2 is divided by the l1 norm of
        the locally estimated unit normal, which undoes the staircase
        over-count of a smooth surface with that normal.
        """
        centers, _, normals = self._exposed_faces()
        correction = np.sum(np.abs(normals), axis=-1)
        return BoundarySamples(
            points=centers,
            weights=np.full(len(centers), self.spacing**2) / correction,
            normals=normals,
            mean_curvature=None,
        )

    def euclidean_volume(self) -> float:
        return float(self.occupancy.sum()) * self.spacing**3

    def euclidean_perimeter(self) -> float:
        return float(np.sum(self.boundary_samples().weights))

    def radial_extent(self) -> Tuple[float, float]:
        centers, _, _ = self._exposed_faces()
        r = np.linalg.norm(centers, axis=-1)
        return float(r.min()), float(r.max())

    def bounding_radius(self) -> float:
        centers = self.cell_centers()
        return float(np.linalg.norm(centers, axis=-1).max()) + 0.5 * np.sqrt(3.0) * self.spacing

    def inner_width(self) -> float:
        depth = ndimage.distance_transform_edt(np.pad(self.occupancy, 1))
        return 2.0 * float(depth.max()) * self.spacing

    def centroid(self) -> np.ndarray:
        return self.cell_centers().mean(axis=0)

    def scaled(self, factor: float) -> "VoxelSet":
        return VoxelSet(origin=tuple(self._o * factor), spacing=self.spacing * factor, occupancy=self.occupancy)

    def translated(self, offset: Sequence[float]) -> "VoxelSet":
        return VoxelSet(
            origin=tuple(self._o + np.asarray(offset, dtype=float)),
            spacing=self.spacing,
            occupancy=self.occupancy,
        )

    def params(self) -> dict:
        return {
            "origin": list(self.origin),
            "spacing": self.spacing,
            "cells": int(self.occupancy.sum()),
            "dims": list(self.occupancy.shape),
        }


def voxelize(region: Region, spacing: float) -> VoxelSet:
    """Cells whose centers lie in the region."""
    if isinstance(region, VoxelSet):
        return region
    if not spacing > 0:
        raise RegionError("voxel spacing must be positive")
    center = region.centroid()
    extent = region.extent_from(center) + 2.0 * spacing
    cells = int(np.ceil(2.0 * extent / spacing))
    origin = center - 0.5 * cells * spacing
    axis = (np.arange(cells) + 0.5) * spacing
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1) + origin
    occupancy = region.contains(grid)
    return VoxelSet(origin=tuple(origin), spacing=spacing, occupancy=occupancy)


def _sampled_extent(region: Region) -> Tuple[float, float]:
    """Dense boundary sampling of |x| followed by a Nelder-Mead polish."""
    theta = np.linspace(0.0, np.pi, QuadratureConfig.PROFILE_SAMPLES_THETA)
    phi = np.linspace(0.0, 2.0 * np.pi, QuadratureConfig.PROFILE_SAMPLES_PHI, endpoint=False)
    t, p = np.meshgrid(theta, phi, indexing="ij")
    c = region.star_center

    def radius(angles: np.ndarray) -> np.ndarray:
        th, ph = angles[..., 0], angles[..., 1]
        d = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        return np.linalg.norm(c + region.boundary_radius(d)[..., None] * d, axis=-1)

    grid = np.stack([t, p], axis=-1)
    values = radius(grid)
    polished = []
    for sign in (1.0, -1.0):
        k = np.unravel_index(np.argmin(sign * values), values.shape)
        res = optimize.minimize(
            lambda a: sign * float(radius(np.asarray(a))),
            grid[k],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-13},
        )
        polished.append(sign * float(res.fun))
    return min(float(values.min()), polished[0]), max(float(values.max()), polished[1])


# ===========================================
# FUNCTIONALS ON REGIONS
# ===========================================
def euclidean_volume(region: Region) -> float:
    return region.euclidean_volume()


def euclidean_perimeter(region: Region) -> float:
    return region.euclidean_perimeter()


def radial_spread(region: Region) -> float:
    lo, hi = region.radial_extent()
    return hi - lo


def isoperimetric_ratio(region: Region, model, quad: Optional[QuadratureSpec] = None) -> float:
    """
    |dK|_g^{3/2} / (6 sqrt(pi) |K|_g). Equals 1 on Euclidean balls and exceeds it on
    other flat regions; large balls of a positive-mass metric fall below 1.
    """
    from src.core.functionals import riemannian_area, riemannian_volume

    area = riemannian_area(region, model, quad).value
    volume = riemannian_volume(region, model, quad).value
    return area**1.5 / (6.0 * np.sqrt(np.pi) * volume)


@dataclass
class AsymmetryResult:
    """Fraenkel asymmetry with the optimal ball center."""
    value: float
    center: Tuple[float, float, float]
    converged: bool
    warning: Optional[str] = None


@lru_cache(maxsize=8)
def _unit_ball_samples(count: int, seed: int) -> np.ndarray:
    """Jittered-grid stratified points in the unit ball."""
    per_axis = int(np.ceil((count * 6.0 / np.pi) ** (1.0 / 3.0)))
    rng = np.random.default_rng(seed)
    cell = 2.0 / per_axis
    corner = np.stack(
        np.meshgrid(*(np.arange(per_axis),) * 3, indexing="ij"), axis=-1
    ).reshape(-1, 3)
    pts = -1.0 + (corner + rng.random(corner.shape)) * cell
    pts = pts[np.linalg.norm(pts, axis=-1) <= 1.0]
    pts.setflags(write=False)
    return pts


def _lens_fraction(distance: float, radius: float) -> float:
    """|B_R(0) n B_R(d e)| / |B_R| for two equal balls."""
    if distance >= 2.0 * radius:
        return 0.0
    lens = np.pi * (4.0 * radius + distance) * (2.0 * radius - distance) ** 2 / 12.0
    return lens / (4.0 * np.pi * radius**3 / 3.0)


def fraenkel_asymmetry(
    region: Region,
    seed: int = 12345,
    samples: int = MassConfig.FRAENKEL_SAMPLES,
    xatol: float = MassConfig.FRAENKEL_XATOL,
) -> AsymmetryResult:
    """
    inf over centers x of |K (sym. diff.) B_x| / |K| with |B_x| = |K|.

    Since |K  sym. diff.  B| = 2(|K| - |K n B|), the objective is
    2(1 - |K n B_x| / |K|). Ball regions use the exact lens volume; other
    shapes average the indicator of K over a fixed stratified sample of B_x
    (the same sample for every x, so the objective is deterministic).
    """
    volume = region.euclidean_volume()
    radius = (3.0 * volume / (4.0 * np.pi)) ** (1.0 / 3.0)
    start = region.centroid()

    if isinstance(region, Ball):
        c0 = np.asarray(region.center)

        def objective(x):
            return 2.0 * (1.0 - _lens_fraction(float(np.linalg.norm(x - c0)), radius))
    else:
        unit = _unit_ball_samples(samples, seed)

        def objective(x):
            return 2.0 * (1.0 - float(np.mean(region.contains(x + radius * unit))))

    step = 0.1 * radius
    simplex = np.vstack([start, start + step * np.eye(3)])
    res = optimize.minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": xatol * radius,
            "fatol": 8.0 / samples,
            "maxiter": 600,
        },
    )
    vertices, values = res.final_simplex
    best = np.min(values)
    ties = [tuple(v) for v, f in zip(vertices, values) if f <= best]
    center = min(ties)
    spread = float(np.max(np.linalg.norm(vertices - vertices[0], axis=-1)))
    converged = bool(res.success)
    warning = None
    if not converged:
        warning = (
            f"asymmetry optimizer not converged (simplex spread {spread:.3g}, "
            f"status {res.status})"
        )
        logger.warning(warning)
    value = float(np.clip(best, 0.0, 2.0))
    return AsymmetryResult(
        value=value, center=tuple(float(c) for c in center), converged=converged, warning=warning
    )


# ===========================================
# EXHAUSTIONS
# ===========================================
@dataclass(frozen=True)
class ExhaustionSpec:
    """
    Family j -> K_j with scales rho_j = rho0 * gamma^j, j = 0..count-1.

    Rules:
        scale-all: K_j = rho_j * template (template at unit scale)
        scale-radius-fix-offset: lengths scaled by rho_j, center kept
            (star-shaped regions keep their perturbation amplitude)
        fix-shape-fix-asymmetry: template is K_0; K_j = (rho_j/rho0) * template
    """
    template: Region
    rho0: float
    gamma: float
    count: int
    rule: str = "scale-all"

    def __post_init__(self):
        if self.count < MassConfig.MIN_EXHAUSTION:
            raise ExhaustionError(
                f"exhaustion needs at least {MassConfig.MIN_EXHAUSTION} members, got {self.count}"
            )
        if not self.gamma > 1.0:
            raise ExhaustionError(f"growth factor must exceed 1, got {self.gamma}")
        if not self.rho0 > 0:
            raise ExhaustionError(f"initial scale must be positive, got {self.rho0}")
        if self.rule not in EXHAUSTION_RULES:
            raise ExhaustionError(f"unknown exhaustion rule '{self.rule}'")

    @property
    def scales(self) -> List[float]:
        return [self.rho0 * self.gamma**j for j in range(self.count)]

    def member(self, rho: float) -> Region:
        t = self.template
        if self.rule == "scale-all":
            return t.scaled(rho)
        if self.rule == "fix-shape-fix-asymmetry":
            return t.scaled(rho / self.rho0)
        # scale-radius-fix-offset
        if isinstance(t, StarShaped):
            return replace(t, rho=t.rho * rho)
        c = t.centroid() if isinstance(t, VoxelSet) else t.star_center
        return t.translated(-c).scaled(rho).translated(c)

    def describe(self) -> dict:
        return {
            "template": self.template.describe(),
            "rho0": self.rho0,
            "gamma": self.gamma,
            "count": self.count,
            "rule": self.rule,
            "scales": self.scales,
        }


def check_nesting(regions: Sequence[Region]) -> List[str]:
    """
    Verify K_j in K_{j+1} via min |x| on dK_{j+1} >= max |x| on K_j.

    Failures before the last pair are returned as warnings; a failure of the
    last pair raises ExhaustionError.
    """
    warnings = []
    for j in range(len(regions) - 1):
        inner_max = regions[j].bounding_radius()
        outer_min = regions[j + 1].radial_extent()[0]
        origin_inside = bool(regions[j + 1].contains(np.zeros((1, 3)))[0])
        if origin_inside and outer_min >= inner_max:
            continue
        message = (
            f"members {j} and {j + 1} are not certified nested "
            f"(max |x| {inner_max:.6g}, next min |x| {outer_min:.6g})"
        )
        if j == len(regions) - 2:
            raise ExhaustionError(message)
        warnings.append(message)
        logger.warning(message)
    return warnings


def generate_exhaustion(spec: ExhaustionSpec, warnings: Optional[list] = None) -> List[Region]:
    regions = [spec.member(rho) for rho in spec.scales]
    notes = check_nesting(regions)
    if warnings is not None:
        warnings.extend(notes)
    return regions


# ===========================================
# CONSTRUCTION FROM CONFIG
# ===========================================
def _parse_params(text: str) -> dict:
    params = {}
    for item in filter(None, (part.strip() for part in text.split(";"))):
        if "=" not in item:
            raise RegionError(f"malformed region parameter '{item}'")
        key, value = (s.strip() for s in item.split("=", 1))
        params[key] = value
    return params


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise RegionError(f"expected comma-separated numbers, got '{text}'") from e


def _modes(text: str) -> Tuple[Mode, ...]:
    modes = []
    for item in filter(None, text.split("|")):
        parts = item.split(":")
        if len(parts) != 3:
            raise RegionError(f"harmonic mode must read l:m:coefficient, got '{item}'")
        try:
            modes.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as e:
            raise RegionError(f"invalid harmonic mode '{item}'") from e
    return tuple(modes)


def region_from_params(shape: str, text: str) -> Region:
    """
    Build a region from `region.shape` and `region.params`.

    Examples:
        ball       radius=10;center=0.5,0,0
        ellipsoid  axes=2,1,1;center=0,0,0
        star       rho=5;alpha=2;modes=2:0:1.0|3:1:0.5;absolute=true
        voxel      source=ball;radius=1;spacing=0.02
    """
    params = _parse_params(text)
    known = {
        "ball": {"radius", "center"},
        "ellipsoid": {"axes", "center"},
        "star": {"rho", "alpha", "modes", "absolute", "center"},
        "voxel": {"source", "radius", "axes", "spacing", "center"},
    }
    if shape not in known:
        raise RegionError(f"unknown region shape '{shape}'")
    unknown = set(params) - known[shape]
    if unknown:
        raise RegionError(f"unknown {shape} parameters: {sorted(unknown)}")

    center = _floats(params["center"]) if "center" in params else ORIGIN
    try:
        if shape == "ball":
            return Ball(radius=float(params.get("radius", 1.0)), center=center)
        if shape == "ellipsoid":
            return Ellipsoid(axes=_floats(params.get("axes", "1,1,1")), center=center)
        if shape == "star":
            return StarShaped(
                rho=float(params.get("rho", 1.0)),
                alpha=float(params.get("alpha", 0.0)),
                modes=_modes(params.get("modes", "")),
                absolute=params.get("absolute", "false").lower() in ("1", "true", "yes"),
                center=center,
            )
        source = params.get("source", "ball")
        if source == "ball":
            base: Region = Ball(radius=float(params.get("radius", 1.0)), center=center)
        elif source == "ellipsoid":
            base = Ellipsoid(axes=_floats(params.get("axes", "1,1,1")), center=center)
        else:
            raise RegionError(f"unknown voxel source '{source}'")
        spacing = float(params.get("spacing", base.inner_width() / 64.0))
        return voxelize(base, spacing)
    except ValueError as e:
        raise RegionError(f"invalid {shape} parameters '{text}': {e}") from e
