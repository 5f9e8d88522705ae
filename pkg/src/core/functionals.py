"""
CapMass 1.0 - Riemannian Functionals
Volume, area, mean curvature, Willmore energy and beta(r) for conformally
flat metrics g = f * delta.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from src.core.errors import DomainError, RegionError, UnsupportedModelError
from src.core.manifold import (
    MetricModel,
    RadialConformalMetric,
    SchwarzschildMetric,
    unit_ball_volume,
    unit_sphere_area,
)
from src.core.quadrature import QuadratureSpec, gauss_nodes, radial_integral, rule_for
from src.core.regions import Ball, Region, VoxelSet


logger = logging.getLogger(__name__)


@dataclass
class Measurement:
    """A computed value with an absolute error estimate."""
    value: float
    error: float = 0.0
    method: str = ""


@dataclass
class SphereFunctionals:
    """Functionals of the centered coordinate sphere S_r."""
    r: float
    A: float
    V: float
    W: float
    beta: float
    H_samples: np.ndarray

    @property
    def alpha(self) -> float:
        """Mean deviation of H from the flat value 2/r."""
        return float(np.mean(self.H_samples)) - 2.0 / self.r


# ===========================================
# HELPERS
# ===========================================
def _is_centered_ball(region: Region) -> bool:
    return isinstance(region, Ball) and np.allclose(region.center, 0.0)


def check_excisions(region: Region, model: MetricModel) -> None:
    """Every excised ball (horizon or core) must sit inside the region."""
    for ball in model.excised_balls():
        c = np.asarray(ball.center[:3], dtype=float)
        if _is_centered_ball(region) and np.allclose(c, 0.0):
            if region.radius < ball.radius * (1.0 - 1e-12):
                raise DomainError(
                    f"ball of radius {region.radius:.6g} lies inside the excised "
                    f"radius {ball.radius:.6g}"
                )
            continue
        if not region.contains_ball(c, ball.radius):
            raise DomainError(
                f"region does not contain the excised ball at {tuple(c)} "
                f"of radius {ball.radius:.6g}"
            )


def _require_three_dimensions(region: Region, model: MetricModel) -> None:
    if model.dimension != 3 and not _is_centered_ball(region):
        raise UnsupportedModelError(
            f"only centered balls are supported in dimension {model.dimension}"
        )


def _radial_volume(r: float, model: RadialConformalMetric) -> Measurement:
    """omega_{n-1} int s^{n-1} f(s)^{n/2} ds from the inner radius to r."""
    if isinstance(model, SchwarzschildMetric):
        value = model.exact_volume(r)
        return Measurement(value=value, error=1e-14 * value, method="closed-form")
    n = model.dimension
    value, err = radial_integral(
        lambda s: s ** (n - 1) * float(model.metric_factor_radial(s)) ** (n / 2.0),
        model.inner_radius,
        r,
    )
    omega = unit_sphere_area(n)
    return Measurement(value=omega * value, error=omega * err, method="radial-quadrature")


def _ray_volume(region: Region, model: MetricModel, quad: QuadratureSpec) -> float:
    """
    int_K f^{3/2} dx by rays from the region's star center.

    Each ray [0, R(w)] is cut at its intersections with the excised balls;
    pieces inside a ball are dropped and the rest integrated with
    Gauss-Legendre (in log t when the piece starts away from the center).
    """
    rule = rule_for(quad)
    c = region.star_center
    d = rule.directions
    reach = region.boundary_radius(d)
    breaks = [np.zeros_like(reach), reach]
    balls = model.excised_balls()
    for ball in balls:
        offset = c - np.asarray(ball.center[:3])
        b = d @ offset
        disc = b**2 - (offset @ offset - ball.radius**2)
        root = np.sqrt(np.maximum(disc, 0.0))
        hit = disc > 0
        breaks.append(np.where(hit, np.clip(-b - root, 0.0, reach), 0.0))
        breaks.append(np.where(hit, np.clip(-b + root, 0.0, reach), 0.0))
    cuts = np.sort(np.stack(breaks, axis=1), axis=1)
    lo, hi = cuts[:, :-1], cuts[:, 1:]

    keep = hi > lo
    mid = 0.5 * (lo + hi)
    mid_points = c + mid[..., None] * d[:, None, :]
    for ball in balls:
        inside = np.linalg.norm(mid_points - np.asarray(ball.center[:3]), axis=-1) < ball.radius
        keep &= ~inside

    p = quad.radial_points
    use_log = lo > 1e-12 * np.maximum(hi, 1e-300)
    safe_lo = np.where(use_log, lo, 1.0)
    safe_hi = np.where(use_log, hi, 1.0)
    u_nodes, u_weights = gauss_nodes(np.log(safe_lo), np.log(safe_hi), p)
    t_log = np.exp(u_nodes)
    w_log = u_weights * t_log
    t_lin, w_lin = gauss_nodes(lo, hi, p)
    t = np.where(use_log[..., None], t_log, t_lin)
    w = np.where(use_log[..., None], w_log, w_lin)

    points = c + t[..., None] * d[:, None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        f = model.metric_factor(points, check_domain=False)
        integrand = np.where(keep[..., None], f**1.5 * t**2 * w, 0.0)
    per_ray = integrand.sum(axis=(1, 2))
    return float(np.sum(rule.weights * per_ray))


def _voxel_volume(region: VoxelSet, model: MetricModel, subdivisions: int) -> float:
    h = region.spacing / subdivisions
    offsets = (np.stack(np.meshgrid(*(np.arange(subdivisions),) * 3, indexing="ij"), -1)
               .reshape(-1, 3) + 0.5) * h - 0.5 * region.spacing
    centers = region.cell_centers()
    total = 0.0
    for off in offsets:
        pts = centers + off
        keep = np.ones(len(pts), dtype=bool)
        for ball in model.excised_balls():
            keep &= np.linalg.norm(pts - np.asarray(ball.center[:3]), axis=-1) > ball.radius
        f = model.metric_factor(pts[keep], check_domain=False)
        total += float(np.sum(f**1.5)) * h**3
    return total


# ===========================================
# VOLUME AND AREA
# ===========================================
def riemannian_volume(
    region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> Measurement:
    """|K|_g with the excised balls removed; error from a two-resolution comparison."""
    quad = quad or QuadratureSpec()
    _require_three_dimensions(region, model)
    check_excisions(region, model)

    if isinstance(model, RadialConformalMetric) and _is_centered_ball(region):
        return _radial_volume(region.radius, model)

    if model.kind == "euclidean" and not isinstance(region, VoxelSet):
        if region.shape == "star":
            fine = region.euclidean_volume(quad)
            coarse = region.euclidean_volume(quad.coarsened())
            return Measurement(model.scale**1.5 * fine, model.scale**1.5 * abs(fine - coarse), "angular-quadrature")
        return Measurement(model.scale**1.5 * region.euclidean_volume(), 0.0, "closed-form")

    if isinstance(region, VoxelSet):
        fine = _voxel_volume(region, model, 2)
        coarse = _voxel_volume(region, model, 1)
        return Measurement(fine, abs(fine - coarse), "voxel-sum")

    fine = _ray_volume(region, model, quad)
    coarse = _ray_volume(region, model, quad.coarsened())
    return Measurement(fine, abs(fine - coarse), "ray-quadrature")


def _surface_area(region: Region, model: MetricModel, quad: QuadratureSpec) -> float:
    samples = region.boundary_samples(rule_for(quad))
    f = model.metric_factor(samples.points)
    return float(np.sum(samples.weights * f))


def riemannian_area(
    region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> Measurement:
    """|dK|_g = int f^{(n-1)/2} dA_0."""
    quad = quad or QuadratureSpec()
    _require_three_dimensions(region, model)
    check_excisions(region, model)

    if isinstance(model, RadialConformalMetric) and _is_centered_ball(region):
        r = region.radius
        model._check_radius(np.asarray(r))
        n = model.dimension
        f = float(model.metric_factor_radial(r))
        value = unit_sphere_area(n) * r ** (n - 1) * f ** ((n - 1) / 2.0)
        return Measurement(value, 1e-15 * value, "closed-form")

    if isinstance(region, VoxelSet):
        return Measurement(_surface_area(region, model, quad), 0.0, "voxel-faces")

    fine = _surface_area(region, model, quad)
    coarse = _surface_area(region, model, quad.coarsened())
    return Measurement(fine, abs(fine - coarse), "surface-quadrature")


def volume_radius(region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """(|K|_g / beta_n)^{1/n}; (3|K|/4pi)^{1/3} in dimension 3."""
    return volume_radius_of(riemannian_volume(region, model, quad).value, model.dimension)


def area_radius(region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """(|dK|_g / omega_{n-1})^{1/(n-1)}."""
    return area_radius_of(riemannian_area(region, model, quad).value, model.dimension)


def volume_radius_of(volume: float, n: int = 3) -> float:
    return (volume / unit_ball_volume(n)) ** (1.0 / n)


def area_radius_of(area: float, n: int = 3) -> float:
    return (area / unit_sphere_area(n)) ** (1.0 / (n - 1))


# ===========================================
# CURVATURE
# ===========================================
def _conformal_mean_curvature(
    model: MetricModel, points: np.ndarray, normals: np.ndarray, euclidean_h: np.ndarray
) -> np.ndarray:
    """
    H_g = f^{-1/2} (H_0 + (n-1)/2 d_nu log f), f = scale * U^{4/(n-2)}.
    In dimension 3: scale^{-1/2} (U^{-2} H_0 + 4 U^{-3} d_nu U).
    """
    n = model.dimension
    u = model.conformal_factor(points)
    du = np.sum(model.gradient(points) * normals, axis=-1)
    f = model.scale * u ** model.conformal_exponent
    dlogf = model.conformal_exponent * du / u
    return (euclidean_h + 0.5 * (n - 1) * dlogf) / np.sqrt(f)


def mean_curvature(x, model: MetricModel) -> float:
    """Mean curvature of the coordinate sphere through x, at x."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise DomainError("the origin is not on a coordinate sphere")
    n = model.dimension
    return float(_conformal_mean_curvature(model, x, x / r, np.asarray((n - 1) / r)))


def surface_mean_curvature(
    region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> np.ndarray:
    """H_g sampled at the region's boundary quadrature nodes."""
    samples = region.boundary_samples(rule_for(quad or QuadratureSpec()))
    if samples.mean_curvature is None:
        raise RegionError(f"{region.shape} boundaries carry no mean curvature")
    return _conformal_mean_curvature(model, samples.points, samples.normals, samples.mean_curvature)


def _willmore(region: Region, model: MetricModel, quad: QuadratureSpec) -> float:
    samples = region.boundary_samples(rule_for(quad))
    if samples.mean_curvature is None:
        raise RegionError(f"{region.shape} boundaries carry no mean curvature")
    h = _conformal_mean_curvature(model, samples.points, samples.normals, samples.mean_curvature)
    f = model.metric_factor(samples.points)
    return float(np.sum(samples.weights * f * h**2))


def surface_willmore(
    region: Region, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> Measurement:
    """int_{dK} H_g^2 dA_g (dimension 3)."""
    quad = quad or QuadratureSpec()
    if model.dimension != 3:
        raise UnsupportedModelError("Willmore energy is computed in dimension 3")
    fine = _willmore(region, model, quad)
    coarse = _willmore(region, model, quad.coarsened())
    return Measurement(fine, abs(fine - coarse), "surface-quadrature")


def willmore_energy(r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """int_{S_r} H^2 dA; 16 pi for every Euclidean sphere."""
    if model.dimension != 3:
        raise UnsupportedModelError("Willmore energy is computed in dimension 3")
    if isinstance(model, RadialConformalMetric):
        h = mean_curvature((0.0, 0.0, r), model)
        area = riemannian_area(Ball(radius=r), model).value
        return h**2 * area
    return surface_willmore(Ball(radius=r), model, quad).value


def beta(r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """
    (1/8pi) int_{S_r} h^{ij} sigma_ij dA_r with sigma = (f - 1) delta.

    On a conformally flat metric the tangential trace is 2(1 - 1/f) whether h
    is raised with g or with itself, and dA_r = f dA_0, so
    beta = (1/4pi) int (f - 1) dA_0 and A(r) = 4 pi r^2 + 4 pi beta exactly.
    """
    if model.dimension != 3:
        raise UnsupportedModelError("beta(r) is defined in dimension 3")
    rule = rule_for(quad or QuadratureSpec())
    f = model.metric_factor(r * rule.directions)
    return float(np.sum(rule.weights * (f - 1.0)) * r**2 / (4.0 * np.pi))


def sphere_functionals(
    r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None
) -> SphereFunctionals:
    quad = quad or QuadratureSpec()
    ball = Ball(radius=r)
    rule = rule_for(quad)
    points = r * rule.directions
    h = _conformal_mean_curvature(model, points, rule.directions, np.full(rule.size, 2.0 / r))
    return SphereFunctionals(
        r=r,
        A=riemannian_area(ball, model, quad).value,
        V=riemannian_volume(ball, model, quad).value,
        W=willmore_energy(r, model, quad),
        beta=beta(r, model, quad),
        H_samples=h,
    )


# ===========================================
# SCHWARZSCHILD SUPPLEMENTS
# ===========================================
@dataclass
class IsoperimetricProfile:
    """Centered-sphere isoperimetric data of a Schwarzschild manifold."""
    area: float
    radius: float
    volume: float
    deficit: float
    implied_constant: float


def schwarzschild_isoperimetric_profile(area: float, mass: float) -> IsoperimetricProfile:
    """
    Volume enclosed by the centered sphere of the given area, and the
    deficit (2/A)(V - A^{3/2}/(6 sqrt(pi))) that tends to m. The implied
    constant is (deficit - m) sqrt(A) / m^2.
    """
    if mass <= 0:
        raise UnsupportedModelError("the profile needs a positive mass")
    model = SchwarzschildMetric(mass=mass)
    rh = model.horizon_radius()
    horizon_area = model.exact_area(rh)
    if area <= horizon_area:
        raise DomainError(f"area {area:.6g} does not exceed the horizon area {horizon_area:.6g}")
    hi = max(2.0 * rh, np.sqrt(area / (4.0 * np.pi)))
    r = optimize.brentq(lambda s: model.exact_area(s) - area, rh, hi, xtol=1e-14, rtol=1e-15)
    volume = model.exact_volume(r)
    deficit = (2.0 / area) * (volume - area**1.5 / (6.0 * np.sqrt(np.pi)))
    return IsoperimetricProfile(
        area=area,
        radius=r,
        volume=volume,
        deficit=deficit,
        implied_constant=(deficit - mass) * np.sqrt(area) / mass**2,
    )


def fst_volume_residual(r: float, model: MetricModel, quad: Optional[QuadratureSpec] = None) -> float:
    """[V(r) - (r A(r)/2 - 2 pi r^3/3 + 2 pi m r^2)] / r^2, which tends to 0."""
    ball = Ball(radius=r)
    volume = riemannian_volume(ball, model, quad).value
    area = riemannian_area(ball, model, quad).value
    m = model.adm_mass()
    predicted = 0.5 * r * area - 2.0 * np.pi * r**3 / 3.0 + 2.0 * np.pi * m * r**2
    return (volume - predicted) / r**2
