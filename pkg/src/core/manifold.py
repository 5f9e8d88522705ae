"""
CapMass 1.0 - Metric Models
Conformally flat asymptotically flat metrics g = scale * U^(4/(n-2)) * delta
and their analytic reference quantities.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from src.core.errors import DomainError, UnknownExpansionError, UnsupportedModelError
from src.core.quadrature import radial_integral
from src.utils.constants import QuadratureConfig


logger = logging.getLogger(__name__)

# Relative slack when testing a point against the horizon sphere
DOMAIN_SLACK = 1e-12


@lru_cache(maxsize=16)
def unit_sphere_area(n: int) -> float:
    """omega_{n-1} = 2 pi^{n/2} / Gamma(n/2), area of the unit sphere in R^n."""
    return float(2.0 * np.pi ** (n / 2.0) / special.gamma(n / 2.0))


def unit_ball_volume(n: int) -> float:
    """beta_n = omega_{n-1} / n."""
    return unit_sphere_area(n) / n


@dataclass(frozen=True)
class ExcisedBall:
    """Coordinate ball removed from the manifold (horizon or puncture core)."""
    center: Tuple[float, ...]
    radius: float


class MetricModel(ABC):
    """
    Abstract conformally flat metric on R^n minus excised balls.

    Implementations provide the conformal factor U and its gradient; the
    metric factor f = scale * U^(4/(n-2)) multiplies the Euclidean metric.
    """
    dimension: int
    scale: float

    @property
    @abstractmethod
    def kind(self) -> str:
        """Config name of the model family."""
        pass

    @abstractmethod
    def conformal_factor(self, x: np.ndarray, check_domain: bool = True) -> np.ndarray:
        """
        Evaluate U at coordinate points.

        Args:
            x: array of shape (..., n)
            check_domain: raise DomainError for points outside the manifold

        Returns:
            array of shape (...)
        """
        pass

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Euclidean gradient of U, shape (..., n)."""
        pass

    @abstractmethod
    def mass_coefficient(self) -> float:
        """Leading coefficient a in U = 1 + a/(2|x|^{n-2}) + ..., unscaled."""
        pass

    @abstractmethod
    def excised_balls(self) -> List[ExcisedBall]:
        pass

    @abstractmethod
    def scaled(self, factor: float) -> "MetricModel":
        """Return the model for the metric factor * g."""
        pass

    @abstractmethod
    def describe(self) -> dict:
        pass

    @property
    def decay_order(self) -> float:
        return float(self.dimension - 2)

    @property
    def conformal_exponent(self) -> float:
        """Exponent 4/(n-2) mapping U to the metric factor."""
        return 4.0 / (self.dimension - 2)

    @property
    def is_rotationally_symmetric(self) -> bool:
        return False

    def metric_factor(self, x: np.ndarray, check_domain: bool = True) -> np.ndarray:
        """f(x) with g = f * delta."""
        u = self.conformal_factor(x, check_domain=check_domain)
        return self.scale * u ** self.conformal_exponent

    def adm_mass(self) -> float:
        """ADM mass of scale * g; a constant rescaling multiplies it by scale^{(n-2)/2}."""
        return self.scale ** ((self.dimension - 2) / 2.0) * self.mass_coefficient()

    def horizon_radius(self) -> float:
        raise UnsupportedModelError(f"{self.kind} metric has no horizon notion")

    def _as_points(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DomainError(
                f"expected points of dimension {self.dimension}, got shape {x.shape}"
            )
        return x


# ===========================================
# ROTATIONALLY SYMMETRIC MODELS
# ===========================================
@dataclass(frozen=True)
class RadialConformalMetric(MetricModel):
    """
    U(x) = u(|x|) for a positive profile u with u -> 1 at infinity.

    The profile and its derivative are vectorized callables. `inner_radius`
    bounds the domain from below (the profile need not be defined inside).
    """
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    dimension: int = 3
    profile_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    inner_radius: float = 0.0
    scale: float = 1.0
    coefficients: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.dimension < 3:
            raise UnsupportedModelError("dimension must be at least 3")
        if self.scale <= 0:
            raise UnsupportedModelError("metric scale must be positive")

    @classmethod
    def from_coefficients(
        cls, coefficients: Sequence[float], dimension: int = 3, scale: float = 1.0
    ) -> "RadialConformalMetric":
        """u(s) = 1 + sum_k a_k s^{-k(n-2)}; the ADM mass is 2 a_1."""
        coeffs = tuple(float(a) for a in coefficients)
        p = dimension - 2

        def profile(s):
            s = np.asarray(s, dtype=float)
            return 1.0 + sum(a * s ** (-(k + 1) * p) for k, a in enumerate(coeffs)) + 0.0 * s

        def derivative(s):
            s = np.asarray(s, dtype=float)
            return sum(
                -(k + 1) * p * a * s ** (-(k + 1) * p - 1) for k, a in enumerate(coeffs)
            ) + 0.0 * s

        inner = _inner_radius(profile, dimension)
        return cls(
            profile=profile,
            dimension=dimension,
            profile_derivative=derivative,
            inner_radius=inner,
            scale=scale,
            coefficients=coeffs,
        )

    @property
    def kind(self) -> str:
        return "radial"

    @property
    def is_rotationally_symmetric(self) -> bool:
        return True

    def radial_profile(self, s: np.ndarray) -> np.ndarray:
        """u(s) without the domain check."""
        return np.asarray(self.profile(np.asarray(s, dtype=float)), dtype=float)

    def radial_derivative(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.profile_derivative is not None:
            return np.asarray(self.profile_derivative(s), dtype=float)
        h = 1e-5 * np.maximum(s, 1.0)
        return (self.profile(s + h) - self.profile(s - h)) / (2.0 * h)

    def conformal_factor(self, x: np.ndarray, check_domain: bool = True) -> np.ndarray:
        x = self._as_points(x)
        s = np.linalg.norm(x, axis=-1)
        if check_domain:
            self._check_radius(s)
        u = self.radial_profile(s)
        if check_domain and np.any(u <= 0):
            raise DomainError("conformal factor is not positive at the given points")
        return u

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._as_points(x)
        s = np.linalg.norm(x, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(s[..., None] > 0, x / s[..., None], 0.0)
        return self.radial_derivative(s)[..., None] * unit

    def _check_radius(self, s: np.ndarray) -> None:
        if self.inner_radius > 0 and np.any(s < self.inner_radius * (1.0 - DOMAIN_SLACK)):
            raise DomainError(
                f"point at radius {float(np.min(s)):.6g} lies inside the excised "
                f"ball of radius {self.inner_radius:.6g}"
            )
        if self.inner_radius == 0 and np.any(s == 0):
            raise DomainError("the origin is not in the domain of a radial profile")

    def mass_coefficient(self) -> float:
        if self.coefficients:
            return 2.0 * self.coefficients[0]
        return extract_mass_coefficient(self.radial_profile, self.dimension)

    def excised_balls(self) -> List[ExcisedBall]:
        if self.inner_radius <= 0:
            return []
        return [ExcisedBall(center=(0.0,) * self.dimension, radius=self.inner_radius)]

    def scaled(self, factor: float) -> "RadialConformalMetric":
        return replace(self, scale=self.scale * factor)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "scale": self.scale,
            "coefficients": list(self.coefficients),
            "inner_radius": self.inner_radius,
        }

    def metric_factor_radial(self, s: np.ndarray) -> np.ndarray:
        """f as a function of coordinate radius."""
        return self.scale * self.radial_profile(s) ** self.conformal_exponent


@dataclass(frozen=True)
class SchwarzschildMetric(RadialConformalMetric):
    """Spatial Schwarzschild: U = 1 + m / (2 |x|^{n-2}) outside the horizon."""
    profile: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False, compare=False)
    mass: float = 0.0

    def __post_init__(self):
        if self.mass < 0:
            raise UnsupportedModelError("Schwarzschild mass must be nonnegative")
        super().__post_init__()
        m, p = self.mass, self.dimension - 2
        object.__setattr__(self, "profile", lambda s: 1.0 + m / (2.0 * np.asarray(s, dtype=float) ** p))
        object.__setattr__(
            self,
            "profile_derivative",
            lambda s: -p * m / (2.0 * np.asarray(s, dtype=float) ** (p + 1)),
        )
        object.__setattr__(self, "inner_radius", self.horizon_radius())
        object.__setattr__(self, "coefficients", (m / 2.0,))

    @property
    def kind(self) -> str:
        return "schwarzschild"

    def horizon_radius(self) -> float:
        if self.mass == 0:
            return 0.0
        return (self.mass / 2.0) ** (1.0 / (self.dimension - 2))

    def mass_coefficient(self) -> float:
        return self.mass

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "scale": self.scale,
            "mass": self.mass,
        }

    # -------------------------------------------
    # Closed forms for centered coordinate balls
    # -------------------------------------------
    def exact_capacity(self, r: float) -> float:
        """cap(B_r) = r^{n-2} + m/2, times scale^{(n-2)/2}."""
        self._check_radius(np.asarray(r))
        p = self.dimension - 2
        return self.scale ** (p / 2.0) * (r**p + self.mass / 2.0)

    def exact_area(self, r: float) -> float:
        n = self.dimension
        u = float(self.radial_profile(r))
        return unit_sphere_area(n) * r ** (n - 1) * (self.scale * u ** self.conformal_exponent) ** (
            (n - 1) / 2.0
        )

    def exact_volume(self, r: float) -> float:
        """
        Volume between the horizon and the coordinate sphere of radius r.
        Closed form in dimension 3, adaptive quadrature otherwise.
        """
        self._check_radius(np.asarray(r))
        n = self.dimension
        if n == 3:
            k = self.mass / 2.0
            if k == 0:
                base = 4.0 * np.pi * r**3 / 3.0
            else:
                base = 4.0 * np.pi * (_schwarzschild_antiderivative(r, k) - _schwarzschild_antiderivative(k, k))
            return self.scale**1.5 * base

        rh = self.horizon_radius()
        omega = unit_sphere_area(n)
        value, _ = radial_integral(
            lambda s: s ** (n - 1) * float(self.radial_profile(s)) ** (2.0 * n / (n - 2)),
            rh,
            r,
        )
        return self.scale ** (n / 2.0) * omega * value

    def exact_potential(self, x: np.ndarray, r: float) -> np.ndarray:
        """Capacitary potential of B_r (dimension 3): (1 - r/|x|) / U."""
        if self.dimension != 3:
            raise UnsupportedModelError("exact potential is only tabulated for n = 3")
        s = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return (1.0 - r / s) / (1.0 + self.mass / (2.0 * s))


def _schwarzschild_antiderivative(s: float, k: float) -> float:
    """Antiderivative of (s + k)^6 / s^4."""
    return (
        s**3 / 3.0
        + 3.0 * k * s**2
        + 15.0 * k**2 * s
        + 20.0 * k**3 * np.log(s)
        - 15.0 * k**4 / s
        - 3.0 * k**5 / s**2
        - k**6 / (3.0 * s**3)
    )


@dataclass(frozen=True)
class EuclideanMetric(SchwarzschildMetric):
    """Flat metric, the m = 0 member of the Schwarzschild family."""

    def __post_init__(self):
        object.__setattr__(self, "mass", 0.0)
        super().__post_init__()

    @property
    def kind(self) -> str:
        return "euclidean"

    def conformal_factor(self, x: np.ndarray, check_domain: bool = True) -> np.ndarray:
        x = self._as_points(x)
        return np.ones(x.shape[:-1])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(self._as_points(x))

    def scaled(self, factor: float) -> "EuclideanMetric":
        return EuclideanMetric(dimension=self.dimension, scale=self.scale * factor)

    def describe(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension, "scale": self.scale}


# ===========================================
# HARMONICALLY FLAT MULTI-CENTER MODEL
# ===========================================
@dataclass(frozen=True)
class MultiCenterMetric(MetricModel):
    """
    U(x) = 1 + sum_i m_i / (2 |x - p_i|) in dimension 3.

    The cores |x - p_i| <= m_i/2 are excised from the manifold; with a single
    center this is exactly the Schwarzschild horizon.
    """
    centers: Tuple[Tuple[float, float, float], ...]
    masses: Tuple[float, ...]
    scale: float = 1.0
    dimension: int = 3

    def __post_init__(self):
        if self.dimension != 3:
            raise UnsupportedModelError("multi-center metrics are three-dimensional")
        if len(self.centers) != len(self.masses) or not self.masses:
            raise UnsupportedModelError("need one mass per center and at least one center")
        if any(m <= 0 for m in self.masses):
            raise UnsupportedModelError("multi-center masses must be positive")
        if self.scale <= 0:
            raise UnsupportedModelError("metric scale must be positive")
        object.__setattr__(
            self, "centers", tuple(tuple(float(c) for c in p) for p in self.centers)
        )
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))

    @property
    def kind(self) -> str:
        return "multicenter"

    @property
    def _centers(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=float)

    def conformal_factor(self, x: np.ndarray, check_domain: bool = True) -> np.ndarray:
        x = self._as_points(x)
        u = np.ones(x.shape[:-1])
        for p, m in zip(self._centers, self.masses):
            d = np.linalg.norm(x - p, axis=-1)
            if check_domain and np.any(d == 0):
                raise DomainError(f"point coincides with the center {tuple(p)}")
            with np.errstate(divide="ignore"):
                u = u + m / (2.0 * d)
        return u

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._as_points(x)
        g = np.zeros_like(x)
        for p, m in zip(self._centers, self.masses):
            diff = x - p
            d = np.linalg.norm(diff, axis=-1)[..., None]
            g -= m * diff / (2.0 * d**3)
        return g

    def mass_coefficient(self) -> float:
        return float(sum(self.masses))

    def excised_balls(self) -> List[ExcisedBall]:
        return [
            ExcisedBall(center=p, radius=m / 2.0) for p, m in zip(self.centers, self.masses)
        ]

    def scaled(self, factor: float) -> "MultiCenterMetric":
        return replace(self, scale=self.scale * factor)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "scale": self.scale,
            "centers": [list(p) for p in self.centers],
            "masses": list(self.masses),
        }


# ===========================================
# OPERATIONS
# ===========================================
def conformal_factor(model: MetricModel, x) -> float:
    """U at a single coordinate point."""
    return float(model.conformal_factor(np.asarray(x, dtype=float)))


def adm_mass(model: MetricModel) -> float:
    return model.adm_mass()


def horizon_radius(model: MetricModel) -> float:
    return model.horizon_radius()


def extract_mass_coefficient(
    profile: Callable[[np.ndarray], np.ndarray],
    dimension: int,
    probe_radius: float = QuadratureConfig.PROBE_RADIUS,
    doublings: int = QuadratureConfig.PROBE_DOUBLINGS,
    tolerance: float = QuadratureConfig.PROBE_TOLERANCE,
) -> float:
    """
    Read off a from u = 1 + a/(2 s^p) + O(s^{-2p}), p = n - 2.

    a(R) = 2 R^p (u(R) - 1) is evaluated at R, 2R, 4R, ...; Richardson
    elimination of the R^{-p} term gives successive estimates that must
    settle to `tolerance` (relative, absolute near zero).
    """
    p = dimension - 2
    factor = 2.0**p

    def probe(radius: float) -> float:
        return 2.0 * radius**p * (float(profile(radius)) - 1.0)

    radius = probe_radius
    previous_probe = probe(radius)
    previous_estimate: Optional[float] = None
    for _ in range(doublings):
        radius *= 2.0
        current = probe(radius)
        estimate = (factor * current - previous_probe) / (factor - 1.0)
        if previous_estimate is not None:
            change = abs(estimate - previous_estimate)
            if change <= tolerance * max(1.0, abs(estimate)):
                logger.debug("mass coefficient %.12g at probe radius %.6g", estimate, radius)
                return estimate
        previous_probe, previous_estimate = current, estimate

    raise UnknownExpansionError(
        f"probe extraction did not settle by radius {radius:.6g} "
        f"(last estimate {previous_estimate})"
    )


def _inner_radius(profile: Callable[[np.ndarray], np.ndarray], dimension: int) -> float:
    """
    Inner edge of the domain of a coefficient profile: the outermost minimal
    coordinate sphere (critical point of s^{n-1} u^{2(n-1)/(n-2)}) if there is
    one, otherwise the radius beyond which u stays positive.
    """
    n = dimension
    grid = np.geomspace(1e-6, 1e6, 4001)
    values = profile(grid)
    bad = np.nonzero(values <= 0)[0]
    start = 0 if len(bad) == 0 else min(bad[-1] + 1, len(grid) - 1)

    def area(s):
        return s ** (n - 1) * np.asarray(profile(s), dtype=float) ** (2.0 * (n - 1) / (n - 2))

    a = area(grid[start:])
    falling = np.nonzero(np.diff(a) < 0)[0]
    if len(falling) == 0:
        return 0.0 if len(bad) == 0 else float(grid[start])
    k = start + falling[-1]
    lo, hi = grid[max(k - 1, start)], grid[min(k + 2, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda s: float(area(s)), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12 * hi})
    return float(res.x)
