"""
CapMass 1.0 - Grid Capacity
Finite-difference minimization of the Dirichlet energy on a cube lattice,
with cut-cell boundary weights at the region and a monopole Robin (or
Dirichlet) condition on the outer cube.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from src.core.capacity import BaseCapacityBackend, CapacityEstimate, PotentialField
from src.core.errors import (
    SolverError,
    SolverNotConvergedError,
    UnsupportedModelError,
    VoxelizationError,
    FitUnstableError,
)
from src.core.functionals import check_excisions
from src.core.manifold import MetricModel, MultiCenterMetric, SchwarzschildMetric
from src.core.quadrature import angular_rule
from src.core.regions import Region
from src.utils.constants import OUTER_BCS, SolverConfig

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Solver parameters, mirroring the solver.* settings."""
    grid_n: int = SolverConfig.GRID_N
    outer_radius_factor: float = SolverConfig.OUTER_RADIUS_FACTOR
    outer_bc: str = SolverConfig.OUTER_BC
    tol: float = SolverConfig.TOL
    max_iter: int = SolverConfig.MAX_ITER
    threads: int = 1

    def __post_init__(self):
        if self.outer_bc not in OUTER_BCS:
            raise SolverError(f"unknown outer boundary condition '{self.outer_bc}'")
        if self.grid_n < 16:
            raise SolverError(f"grid_n must be at least 16, got {self.grid_n}")
        if self.outer_radius_factor <= 1.0:
            raise SolverError("outer_radius_factor must exceed 1")


@dataclass
class _Solve:
    field: PotentialField
    energy: float
    flux: float
    iterations: int
    residual: float


@dataclass
class ExpansionFit:
    """phi = 1 - c/|x| + W fitted on spheres about the lattice center."""
    coefficient: float
    second_order: float
    shell_radii: np.ndarray
    residuals: np.ndarray = field(repr=False)

    @property
    def growth(self) -> float:
        return float(self.residuals[-1] / max(self.residuals[0], 1e-300))


# ===========================================
# LATTICE ASSEMBLY
# ===========================================
def _dual_factors(n_nodes: int, axis: int) -> np.ndarray:
    """Dual-face fraction of each lattice edge along `axis` (1/2 per cube face touched)."""
    edge = np.ones(n_nodes)
    edge[[0, -1]] = 0.5
    shape = [n_nodes] * 3
    shape[axis] = n_nodes - 1
    weights = np.ones(shape)
    for other in range(3):
        if other != axis:
            view = [1, 1, 1]
            view[other] = n_nodes
            weights = weights * edge.reshape(view)
    return weights


def _far_field_center(model: MetricModel, fallback: np.ndarray) -> np.ndarray:
    if isinstance(model, MultiCenterMetric):
        m = np.asarray(model.masses)
        return (m[:, None] * np.asarray(model.centers)).sum(axis=0) / m.sum()
    if model.mass_coefficient() == 0.0:
        return fallback
    return np.zeros(3)


def _robin_terms(points: np.ndarray, n_nodes: int, spacing: float, model, mass_center) -> np.ndarray:
    """
    kappa * dual area for every node on the cube surface, zero elsewhere.

    kappa = sqrt(lambda) U (x . nu) / |x|^2 makes the monopole
    phi = 1 - C / (|x| U) an exact solution of the boundary condition.
    """
    coeff = np.zeros((n_nodes,) * 3)
    edge = np.ones(n_nodes)
    edge[[0, -1]] = 0.5
    for axis in range(3):
        area = spacing**2 * np.outer(edge, edge)
        for side, index in ((-1.0, 0), (1.0, n_nodes - 1)):
            sl = [slice(None)] * 3
            sl[axis] = index
            sl = tuple(sl)
            x = points[sl] - mass_center
            normal_component = side * x[..., axis]
            dist2 = np.einsum("...i,...i->...", x, x)
            u = model.conformal_factor(points[sl], check_domain=False)
            kappa = np.sqrt(model.scale) * u * normal_component / dist2
            coeff[sl] += kappa * area
    return coeff


def _solve_lattice(
    model: MetricModel,
    region: Region,
    spec: GridSpec,
    center: np.ndarray,
    half_count: int,
    spacing: float,
    region_radius: float,
) -> _Solve:
    n_nodes = 2 * half_count + 1
    axis_values = (np.arange(n_nodes) - half_count) * spacing
    points = np.stack(np.meshgrid(axis_values, axis_values, axis_values, indexing="ij"), axis=-1) + center

    level = region.level_set(points.reshape(-1, 3)).reshape((n_nodes,) * 3)
    inside = level <= 0.0
    if not inside.any():
        raise VoxelizationError("no lattice node falls inside the region")

    boundary = np.zeros_like(inside)
    for axis in range(3):
        sl = [slice(None)] * 3
        sl[axis] = 0
        boundary[tuple(sl)] = True
        sl[axis] = n_nodes - 1
        boundary[tuple(sl)] = True
    if np.any(inside & boundary):
        raise VoxelizationError("region touches the outer cube")

    dirichlet = spec.outer_bc == "dirichlet"
    unknown = ~inside & ~boundary if dirichlet else ~inside
    unknown_flat = unknown.ravel()
    uid = np.full(unknown_flat.size, -1, dtype=np.int64)
    n_unknown = int(unknown_flat.sum())
    uid[unknown_flat] = np.arange(n_unknown)

    ids = np.arange(n_nodes**3).reshape((n_nodes,) * 3)
    flat_points = points.reshape(-1, 3)
    flat_level = level.ravel()
    flat_inside = inside.ravel()

    def sqrt_factor(x):
        return np.sqrt(model.metric_factor(x, check_domain=False))

    edges_a: List[np.ndarray] = []
    edges_b: List[np.ndarray] = []
    edges_g: List[np.ndarray] = []
    cuts_o: List[np.ndarray] = []
    cuts_g: List[np.ndarray] = []

    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n_nodes - 1)
        hi[axis] = slice(1, n_nodes)
        a = ids[tuple(lo)].ravel()
        b = ids[tuple(hi)].ravel()
        dual = _dual_factors(n_nodes, axis).ravel()
        in_a = flat_inside[a]
        in_b = flat_inside[b]

        both = ~in_a & ~in_b
        mid = 0.5 * (flat_points[a[both]] + flat_points[b[both]])
        edges_a.append(a[both])
        edges_b.append(b[both])
        edges_g.append(spacing * dual[both] * sqrt_factor(mid))

        for outer, inner, mask in ((a, b, ~in_a & in_b), (b, a, in_a & ~in_b)):
            o, i = outer[mask], inner[mask]
            theta = flat_level[o] / (flat_level[o] - flat_level[i])
            theta = np.clip(theta, SolverConfig.MIN_CUT_FRACTION, 1.0)
            mid = flat_points[o] + 0.5 * theta[:, None] * (flat_points[i] - flat_points[o])
            cuts_o.append(o)
            cuts_g.append(spacing * dual[mask] * sqrt_factor(mid) / theta)

    edge_a = np.concatenate(edges_a)
    edge_b = np.concatenate(edges_b)
    edge_g = np.concatenate(edges_g)
    cut_o = np.concatenate(cuts_o)
    cut_g = np.concatenate(cuts_g)

    diag = np.zeros(n_unknown)
    rhs = np.zeros(n_unknown)

    ua, ub = uid[edge_a], uid[edge_b]
    full = (ua >= 0) & (ub >= 0)
    rows = [ua[full], ub[full]]
    cols = [ub[full], ua[full]]
    vals = [-edge_g[full], -edge_g[full]]
    np.add.at(diag, ua[full], edge_g[full])
    np.add.at(diag, ub[full], edge_g[full])
    # Edges to fixed boundary nodes (phi = 1)
    for u, other in ((ua, ub), (ub, ua)):
        mask = (u >= 0) & (other < 0)
        np.add.at(diag, u[mask], edge_g[mask])
        np.add.at(rhs, u[mask], edge_g[mask])

    uo = uid[cut_o]
    np.add.at(diag, uo[uo >= 0], cut_g[uo >= 0])

    robin = np.zeros(n_nodes**3)
    if not dirichlet:
        mass_center = _far_field_center(model, center)
        robin = _robin_terms(points, n_nodes, spacing, model, mass_center).ravel()
        on_surface = boundary.ravel()
        diag[uid[on_surface]] += robin[on_surface]
        rhs[uid[on_surface]] += robin[on_surface]

    rows.append(np.arange(n_unknown))
    cols.append(np.arange(n_unknown))
    vals.append(diag)
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsr()
    preconditioner = sparse.diags(1.0 / diag)

    dist = np.linalg.norm(flat_points[unknown_flat] - center, axis=-1)
    start = np.clip(1.0 - region_radius / dist, 0.0, 1.0)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    solution, info = spla.cg(
        matrix, rhs, x0=start, rtol=spec.tol, atol=0.0,
        maxiter=spec.max_iter, M=preconditioner, callback=count,
    )
    residual = float(np.linalg.norm(rhs - matrix @ solution) / np.linalg.norm(rhs))
    if info > 0:
        raise SolverNotConvergedError(
            f"conjugate gradient stopped after {iterations} iterations "
            f"at relative residual {residual:.3g}"
        )
    if info < 0:
        raise SolverError(f"conjugate gradient failed (info={info})")

    phi = np.zeros(n_nodes**3)
    if dirichlet:
        phi[boundary.ravel()] = 1.0
    phi[unknown_flat] = solution
    phi[flat_inside] = 0.0

    energy = float(
        np.sum(edge_g * (phi[edge_a] - phi[edge_b]) ** 2)
        + np.sum(cut_g * phi[cut_o] ** 2)
        + np.sum(robin * (1.0 - phi) ** 2)
    ) / FOUR_PI

    potential = PotentialField(
        spacing=spacing,
        center=tuple(float(c) for c in center),
        half_count=half_count,
        values=phi.reshape((n_nodes,) * 3),
        inside=inside,
        region=region,
        model=model,
        region_radius=region_radius,
    )
    flux = sphere_flux(potential)
    logger.debug(
        "lattice K=%d h=%.4g: %d unknowns, %d iterations, energy %.8g, flux %.8g",
        half_count, spacing, n_unknown, iterations, energy, flux,
    )
    return _Solve(field=potential, energy=energy, flux=flux, iterations=iterations, residual=residual)


def sphere_flux(potential: PotentialField, n_theta: int = 32, n_phi: int = 64) -> float:
    """(1/4pi) int_S sqrt(f) d phi/dr dA on a sphere between region and outer cube."""
    rho = potential.region_radius + SolverConfig.FLUX_SPHERE_FRACTION * (
        potential.outer_radius - potential.region_radius
    )
    rule = angular_rule(n_theta, n_phi)
    pts = np.asarray(potential.center) + rho * rule.directions
    grad = potential.interpolate_gradient(pts)
    radial = np.einsum("ij,ij->i", grad, rule.directions)
    weight = np.sqrt(potential.model.metric_factor(pts, check_domain=False))
    return float(np.sum(rule.weights * rho**2 * weight * radial) / FOUR_PI)


# ===========================================
# BACKEND
# ===========================================
def _lattice_geometry(region: Region, spec: GridSpec) -> Tuple[np.ndarray, float, int, float]:
    center = np.asarray(region.centroid(), dtype=float)
    region_radius = region.extent_from(center)
    half_count = spec.grid_n // 2
    spacing = spec.outer_radius_factor * region_radius / half_count

    cells_across = region.inner_width() / spacing
    if cells_across < SolverConfig.MIN_CELLS_ACROSS:
        raise VoxelizationError(
            f"thinnest feature spans {cells_across:.2f} cells; "
            f"need {SolverConfig.MIN_CELLS_ACROSS} (raise solver.grid_n)"
        )
    if region.euclidean_volume() < 8.0 * spacing**3:
        raise VoxelizationError("region volume is below 8 grid cells")
    return center, region_radius, half_count, spacing


def capacity_grid(
    model: MetricModel, region: Region, spec: Optional[GridSpec] = None
) -> Tuple[CapacityEstimate, PotentialField]:
    """
    Grid capacity with an error estimate.

    The lattice is solved at two outer radii with the same spacing; the
    flux values are extrapolated in 1/R_out. The error estimate adds the
    energy/flux gap to the extrapolation correction.
    """
    spec = spec or GridSpec()
    if model.dimension != 3:
        raise UnsupportedModelError("the grid solver is three-dimensional")
    check_excisions(region, model)
    center, region_radius, half_count, spacing = _lattice_geometry(region, spec)
    second_count = int(round(SolverConfig.SECOND_RADIUS_RATIO * half_count))

    def run(count: int) -> _Solve:
        return _solve_lattice(model, region, spec, center, count, spacing, region_radius)

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            first, second = pool.map(run, (half_count, second_count))
    else:
        first, second = run(half_count), run(second_count)

    r1, r2 = first.field.outer_radius, second.field.outer_radius
    extrapolated = (r2 * second.flux - r1 * first.flux) / (r2 - r1)
    if not extrapolated > 0:
        raise SolverError(f"grid capacity is not positive ({extrapolated:.6g})")

    error = abs(second.energy - second.flux) + abs(extrapolated - second.flux)
    estimate = CapacityEstimate(
        value=extrapolated,
        method="grid-variational",
        error_estimate=error,
        diagnostics={
            "grid_n": spec.grid_n,
            "spacing": spacing,
            "outer_radius": r1,
            "outer_bc": spec.outer_bc,
            "energy": first.energy,
            "flux": first.flux,
            "energy_second": second.energy,
            "flux_second": second.flux,
            "iterations": first.iterations + second.iterations,
            "residual": max(first.residual, second.residual),
            "threads": spec.threads,
        },
    )
    logger.info(
        "grid capacity %.8g +- %.2g (energy %.8g, flux %.8g)",
        estimate.value, estimate.error_estimate, first.energy, first.flux,
    )
    return estimate, first.field


class GridCapacityBackend(BaseCapacityBackend):
    """Variational grid solver; applies to any three-dimensional model."""

    def __init__(self, spec: Optional[GridSpec] = None):
        self.spec = spec or GridSpec()

    @property
    def name(self) -> str:
        return "grid-variational"

    def is_available(self, model: MetricModel, region: Region) -> bool:
        return model.dimension == 3

    def estimate(self, model: MetricModel, region: Region) -> CapacityEstimate:
        estimate, _ = capacity_grid(model, region, self.spec)
        return estimate


# ===========================================
# POTENTIAL DIAGNOSTICS
# ===========================================
def extract_expansion(
    potential: PotentialField, shells: int = 8, max_growth: float = 4.0
) -> ExpansionFit:
    """
    Fit 1 - phi = c/r + d/r^2 to sphere averages of phi and report the
    scaled remainder max |phi - 1 + c/r| * r^2 / rho on each shell.
    """
    rho = potential.region_radius
    outer = potential.outer_radius
    if outer < 2.0 * rho:
        raise FitUnstableError("outer radius too small for an expansion fit")
    radii = np.linspace(0.5 * (rho + outer), 0.9 * outer, shells)
    rule = angular_rule(16, 32)
    center = np.asarray(potential.center)

    samples = np.stack([potential.interpolate(center + r * rule.directions) for r in radii])
    means = samples @ rule.weights / FOUR_PI
    design = np.stack([1.0 / radii, 1.0 / radii**2], axis=-1)
    (c, d), *_ = np.linalg.lstsq(design, 1.0 - means, rcond=None)

    remainder = samples - (1.0 - c / radii[:, None])
    residuals = np.max(np.abs(remainder), axis=1) * radii**2 / rho
    fit = ExpansionFit(coefficient=float(c), second_order=float(d), shell_radii=radii, residuals=residuals)
    if fit.growth > max_growth:
        raise FitUnstableError(
            f"expansion remainder grows by {fit.growth:.2f}x across the fitting shells"
        )
    return fit


def bernoulli_residual(
    potential: PotentialField, region: Optional[Region] = None, model: Optional[MetricModel] = None
) -> float:
    """
    Relative variation (max - min) / mean of the g-normal derivative of phi
    over the region boundary, from one-sided differences at 2h and 4h.
    """
    region = region or potential.region
    model = model or potential.model
    h = potential.spacing
    if region.inner_width() / h < SolverConfig.BOUNDARY_CLEARANCE_CELLS:
        raise SolverError("region is too thin for boundary sampling")

    samples = region.boundary_samples(angular_rule(16, 32))
    step = 2.0 * h
    near = samples.points + step * samples.normals
    far = samples.points + 2.0 * step * samples.normals
    limit = potential.outer_radius - h
    if np.any(np.abs(far - np.asarray(potential.center)) > limit):
        raise SolverError("boundary samples leave the lattice")

    derivative = (4.0 * potential.interpolate(near) - potential.interpolate(far)) / (2.0 * step)
    g_normal = derivative / np.sqrt(model.metric_factor(samples.points, check_domain=False))
    mean = float(np.average(g_normal, weights=samples.weights))
    if mean <= 0:
        raise SolverError("normal derivative of the potential is not positive")
    return float((g_normal.max() - g_normal.min()) / mean)


def potential_error(potential: PotentialField, model: SchwarzschildMetric, r: float) -> float:
    """max |phi - phi_exact| over the lattice nodes outside B_r."""
    pts = potential.node_coordinates()
    outside = ~potential.inside
    exact = model.exact_potential(pts[outside], r)
    return float(np.max(np.abs(potential.values[outside] - exact)))
