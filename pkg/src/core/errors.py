"""
CapMass 1.0 - Error Types
"""


class CapMassError(Exception):
    """Base class for every error raised by the library."""


class DomainError(CapMassError):
    """A point or region lies outside the manifold (inside a horizon or core)."""


class UnsupportedModelError(CapMassError):
    """The operation is not defined for this metric model."""


class UnknownExpansionError(CapMassError):
    """The ADM coefficient of a radial profile could not be extracted."""


class RegionError(CapMassError):
    """Invalid region parameters."""


class ExhaustionError(CapMassError):
    """Invalid exhaustion schedule or non-nested family."""


class QuadratureError(CapMassError):
    """A numerical integral failed to converge."""


class SolverError(CapMassError):
    """Finite-difference capacity solve failed."""


class SolverNotConvergedError(SolverError):
    """Conjugate gradient did not reach the residual floor."""


class VoxelizationError(SolverError):
    """Region is too coarse or too small for the grid."""


class FitUnstableError(CapMassError):
    """Expansion fit residual grows with radius."""


class ConfigError(CapMassError):
    """Invalid scenario configuration."""
