"""Application-wide constants and defaults."""

import os

APP_NAME = "ClusterPCA"
APP_VERSION = "0.1.0"


def app_dir() -> str:
    """Directory holding the log file and the saved settings."""
    override = os.environ.get("CLUSTERPCA_HOME")
    if override:
        return override
    if "APPDATA" in os.environ:
        return os.path.join(os.environ["APPDATA"], APP_NAME)
    return os.path.join(os.path.expanduser("~"), ".clusterpca")


# LOO-PCR singleton threshold and ARI stopping threshold
DEFAULT_TAU = 0.95
DEFAULT_ETA = 0.95
DEFAULT_MAX_ITERATIONS = 20

# Ratio-estimator cap for whole-panel (common) component counts
DEFAULT_COMMON_CAP = 5

# Number of variance tiers the iterative selector may strip
DEFAULT_MAX_TIERS = 3

# Noise floor of the tier-stripping selector: multiple of the trailing-half median
NOISE_FLOOR_FACTOR = 2.0

# Smallest cluster that can donate principal components
MIN_DONOR_SIZE = 2

# Numerical tolerances
ORTHO_TOL = 1e-8
DEGENERATE_TOL = 1e-12
SIGMA2_FLOOR = 1e-8
MAX_CONDITION = 1e12
UNIDENTIFIABLE_CORR = 0.99

# Group lasso
GL_TOL = 1e-8
GL_MAX_SWEEPS = 10_000
CV_GRID_SIZE = 50
CV_GRID_SPAN = 1e-4
DEFAULT_FOLDS = 5

# POET correlation-scale soft threshold constant: C * sqrt(log p / n)
POET_CONSTANT = 0.5

# Covariance estimators
COV_CPCA = "cpca"
COV_PCA = "pca"
COV_POET = "poet"
COV_SAMPLE = "sample"
COV_METHODS = [COV_CPCA, COV_PCA, COV_POET, COV_SAMPLE]

# Portfolio backtest
DEFAULT_WINDOW = 110
DEFAULT_REFIT_EVERY = 1
DEFAULT_RISK_FREE = 0.0

# Simulation designs. theta rows are per-cluster means of the specific eigenvalues.
_THETA_FIVE = [(25.0, 25.0), (25.0, 5.0), (25.0, 5.0), (25.0, 5.0), (5.0, 5.0)]
_THETA_TEN = [(25.0, 25.0)] * 2 + [(25.0, 5.0)] * 6 + [(5.0, 5.0)] * 2

EXAMPLES = {
    1: {"n": 50, "theta": _THETA_FIVE, "r_c": 3},
    2: {"n": 30, "theta": _THETA_FIVE, "r_c": 3},
    3: {"n": 50, "theta": _THETA_TEN, "r_c": 3},
    4: {"n": 30, "theta": _THETA_FIVE, "r_c": 0},
}
CLUSTER_SIZE = 20
COMMON_MEAN = 125.0
COMMON_VARIANCE = 5.0
SPECIFIC_VARIANCE = 1.0
NOISE_SD = 0.5
EIGEN_FLOOR = 0.1
RESPONSE_SD = 1.0
ALPHA_VALUE = 1.0
BETA_ACTIVE = 25.0

# Simulation harness method tags
METHOD_CPCA_I = "cpca_i"
METHOD_CPCA_F = "cpca_f"
METHOD_PCA = "pca"
METHOD_CPCA_I_G = "cpca_i_g"
METHOD_CPCA_F_G = "cpca_f_g"
METHOD_POET = "poet"

# CLI exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NOT_CONVERGED = 2
