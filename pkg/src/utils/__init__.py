"""
CapMass 1.0 - Utils Package
"""
from .constants import (
    QuadratureConfig,
    SolverConfig,
    MassConfig,
    ReportConfig,
    DEFAULT_SETTINGS,
    BASE_DIR,
    DATA_DIR,
    SCENARIOS_DIR,
    TOOL_VERSION,
)

__all__ = [
    "QuadratureConfig",
    "SolverConfig",
    "MassConfig",
    "ReportConfig",
    "DEFAULT_SETTINGS",
    "BASE_DIR",
    "DATA_DIR",
    "SCENARIOS_DIR",
    "TOOL_VERSION",
]
