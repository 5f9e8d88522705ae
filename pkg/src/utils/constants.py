"""
CapMass 1.0 - Constants and Configuration
"""
from pathlib import Path

TOOL_NAME = "capmass"
TOOL_VERSION = "1.0.0"

# ===========================================
# PATHS
# ===========================================
BASE_DIR = Path(__file__).parent.parent.parent
DATA_DIR = BASE_DIR / "data"
SCENARIOS_DIR = DATA_DIR / "scenarios"
DEFAULT_OUTPUT_DIR = BASE_DIR / "runs"

# Files written into every run directory
MANIFEST_FILE = "manifest.db"
RECORDS_FILE = "records.csv"
REPORT_FILE = "report.json"
CONFIG_SNAPSHOT_FILE = "config.json"
SWEEP_FILE = "sweep.csv"

# ===========================================
# QUADRATURE SETTINGS
# ===========================================
class QuadratureConfig:
    ANGULAR_THETA = 64     # Gauss-Legendre nodes in cos(theta)
    ANGULAR_PHI = 128      # uniform nodes in phi
    RADIAL_POINTS = 64     # Gauss-Legendre nodes per radial sub-interval
    TAIL_RADIUS_FACTOR = 1000.0
    QUAD_EPSREL = 1e-13
    QUAD_LIMIT = 200

    # ADM mass extraction from a radial profile
    PROBE_RADIUS = 1000.0
    PROBE_DOUBLINGS = 6
    PROBE_TOLERANCE = 1e-6

    # Dense sampling used to normalize star-shaped profiles
    PROFILE_SAMPLES_THETA = 181
    PROFILE_SAMPLES_PHI = 360

# ===========================================
# GRID SOLVER SETTINGS
# ===========================================
class SolverConfig:
    GRID_N = 96
    OUTER_RADIUS_FACTOR = 4.0
    SECOND_RADIUS_RATIO = 1.25   # second solve for the 1/R_out extrapolation
    OUTER_BC = "robin"           # robin | dirichlet
    TOL = 1e-10
    MAX_ITER = 20000
    MIN_CELLS_ACROSS = 8
    MIN_CUT_FRACTION = 1e-2
    FLUX_SPHERE_FRACTION = 0.5   # flux sphere between region and R_out
    BOUNDARY_CLEARANCE_CELLS = 4

# ===========================================
# MASS / DEFICIT SETTINGS
# ===========================================
class MassConfig:
    EXTRAPOLATION_POWER = 1.0
    SLACK_QUADRATURE = 1e-6
    SLACK_GRID = 0.02
    ASYMMETRY_FLOOR = 1e-3
    MIN_EXHAUSTION = 3
    FRAENKEL_SAMPLES = 200_000
    FRAENKEL_XATOL = 1e-3
    FIT_QUALITY = 0.05          # decaying-fit residual allowed per unit of family spread
    DIVERGENCE_RATIO = 0.5      # growth fit must beat the decaying fit by this factor
    NOISE_FLOOR = 1e-9          # relative rounding floor for extrapolated values

# ===========================================
# REPORT SETTINGS
# ===========================================
class ReportConfig:
    CSV_COLUMNS = [
        "j", "rho", "v_radius", "a_radius", "capacity", "cap_err",
        "cv_def_radius", "cv_def_norm", "iso_def", "iso_def_alt",
        "bm_bound", "asymmetry",
    ]
    ERROR_COLUMNS = ["v_err", "a_err", "cv_def_err", "iso_def_err", "bm_err"]
    FLOAT_FORMAT = "%.12g"
    LOG_FORMAT = "[%(name)s] %(message)s"

# ===========================================
# ENUMERATIONS
# ===========================================
METRIC_KINDS = ("euclidean", "schwarzschild", "radial", "multicenter")
REGION_SHAPES = ("ball", "ellipsoid", "star", "voxel")
EXHAUSTION_RULES = ("scale-all", "scale-radius-fix-offset", "fix-shape-fix-asymmetry")
CAPACITY_METHODS = (
    "radial-quadrature",
    "conformal-shift",
    "grid-variational",
    "euclidean-closed-form",
)
OUTER_BCS = ("robin", "dirichlet")

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3

# ===========================================
# DEFAULT SETTINGS
# ===========================================
# Also the config-key schema: any key not listed here is rejected.
DEFAULT_SETTINGS = {
    "metric.kind": "schwarzschild",
    "metric.mass": 1.0,
    "metric.dimension": 3,
    "metric.centers": "",            # "x,y,z;x,y,z"
    "metric.masses": "",             # "m1,m2"
    "metric.scale": 1.0,
    "metric.profile_coeffs": "",     # "a1,a2,..." for metric.kind = radial
    "region.shape": "ball",
    "region.params": "radius=1",
    "exhaustion.rho0": 50.0,
    "exhaustion.gamma": 2.0,
    "exhaustion.count": 4,
    "exhaustion.rule": "scale-all",
    "rng.seed": 12345,
    "quadrature.angular_theta": QuadratureConfig.ANGULAR_THETA,
    "quadrature.angular_phi": QuadratureConfig.ANGULAR_PHI,
    "quadrature.radial_points": QuadratureConfig.RADIAL_POINTS,
    "quadrature.tail_radius_factor": QuadratureConfig.TAIL_RADIUS_FACTOR,
    "solver.grid_n": SolverConfig.GRID_N,
    "solver.outer_radius_factor": SolverConfig.OUTER_RADIUS_FACTOR,
    "solver.outer_bc": SolverConfig.OUTER_BC,
    "solver.tol": SolverConfig.TOL,
    "solver.max_iter": SolverConfig.MAX_ITER,
    "solver.threads": 1,
    "capacity.backends": "auto",
    "mass.extrapolation_power": MassConfig.EXTRAPOLATION_POWER,
    "mass.log_term": False,
    "mass.slack_quadrature": MassConfig.SLACK_QUADRATURE,
    "mass.slack_grid": MassConfig.SLACK_GRID,
    "sweep.key": "",
    "sweep.values": "",
    "output.dir": str(DEFAULT_OUTPUT_DIR),
}

# Documented ranges: key -> (min, max), inclusive
SETTING_RANGES = {
    "metric.mass": (0.0, 1e6),
    "metric.dimension": (3, 5),
    "metric.scale": (1e-6, 1e6),
    "exhaustion.rho0": (1e-6, 1e9),
    "exhaustion.gamma": (1.0 + 1e-9, 100.0),
    "exhaustion.count": (MassConfig.MIN_EXHAUSTION, 64),
    "rng.seed": (0, 2**64 - 1),
    "quadrature.angular_theta": (2, 4096),
    "quadrature.angular_phi": (4, 8192),
    "quadrature.radial_points": (2, 4096),
    "quadrature.tail_radius_factor": (1.0, 1e12),
    "solver.grid_n": (16, 512),
    "solver.outer_radius_factor": (2.0, 100.0),
    "solver.tol": (1e-16, 1e-2),
    "solver.max_iter": (1, 10_000_000),
    "solver.threads": (1, 1024),
    "mass.extrapolation_power": (0.1, 10.0),
    "mass.slack_quadrature": (0.0, 1.0),
    "mass.slack_grid": (0.0, 1.0),
}

SETTING_CHOICES = {
    "metric.kind": METRIC_KINDS,
    "region.shape": REGION_SHAPES,
    "exhaustion.rule": EXHAUSTION_RULES,
    "solver.outer_bc": OUTER_BCS,
}
