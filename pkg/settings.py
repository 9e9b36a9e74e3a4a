"""Settings and configuration for the spectrum fusion pipeline."""
import math
import os

# ============================================================================
# Output and Logging
# ============================================================================
# Results directory. DGPFCO_OUTPUT_DIR overrides whatever the run file says.
OUTPUT_DIR = os.environ.get("DGPFCO_OUTPUT_DIR")

# Enable detailed logging
DEBUG = os.environ.get("DGPFCO_DEBUG", "false").lower() == "true"
LOG_LEVEL = os.environ.get("DGPFCO_LOG_LEVEL", "DEBUG" if DEBUG else "INFO").upper()

# Sidecar log written next to the artifacts; the only place timestamps appear.
RUN_LOG_NAME = "run.log"

# ============================================================================
# Artifacts
# ============================================================================
ARTIFACT_SCHEMA_VERSION = "1.0"

# Floats written to CSV keep 17 significant digits.
CSV_FLOAT_FORMAT = "%.17g"

# ============================================================================
# Linear Algebra
# ============================================================================
# Jitter is escalated by JITTER_FACTOR, starting at DEFAULT_JITTER, until the
# factorization succeeds or MAX_JITTER is exceeded.
DEFAULT_JITTER = 1e-8
JITTER_FACTOR = 10.0
MAX_JITTER = 1e-4

# ============================================================================
# Multi-fidelity Fusion
# ============================================================================
ANCHOR_PRECISION = 1e8

# Validity windows as (lower, upper, upper_inclusive) in Mpc^-1.
MIRA_TITAN_RANGES = {
    "anchor_source": "perturbation",
    "anchor": (0.0, 0.04, False),
    "low": (0.04, 0.25, False),
    "high": (0.04, 5.0, True),
}
MIRA_TITAN_LOW_RUNS = 16

CAMB_ANCHOR_K = 10 ** -2.2
CAMB_RANGES = {
    "anchor_source": "truth",
    "anchor": (0.0, CAMB_ANCHOR_K, False),
    "low": (CAMB_ANCHOR_K, math.inf, False),
    "high": (CAMB_ANCHOR_K, math.inf, False),
}
CAMB_LOW_RUNS = 15

LOESS_SPAN = 0.75

# Error covariance conventions: "diagonal", "literal", "propagated".
DEFAULT_CONVENTION = {
    "mira-titan": "literal",
    "camb": "diagonal",
    "synthetic": "propagated",
}

# log(theta) multi-start bounds for the Matern fit of the low-resolution errors.
ERROR_COV_LOG_THETA_BOUNDS = (math.log(1e-10), math.log(1e3))
ERROR_COV_STARTS = 6

# ============================================================================
# Deep GP Sampler
# ============================================================================
DGP_ITERATIONS = 10000
DGP_BURN_IN = 5000
DGP_THIN = 5
DGP_PROPOSAL_SCALE = 0.3
DGP_DRAWS_PER_SAMPLE = 1

# Gamma (shape, rate) priors on the lengthscales of unit-scaled inputs.
THETA_W_PRIOR = (1.5, 4.0)
THETA_S_PRIOR = (1.5, 1.0)

ESS_MAX_SHRINKS = 200

# Fraction of retained samples whose posterior factorization may fail before aborting.
MAX_SKIPPED_FRACTION = 0.01
MIN_BAND_DRAWS = 100

# ============================================================================
# Principal-component Emulator
# ============================================================================
DEFAULT_P_ETA = 10
POWEXP_ALPHA = 1.95
WEIGHT_GP_NUGGET = 1e-8
BETA_START_RANGE = (-3.0, 3.0)
BETA_BOUNDS = (-6.0, 6.0)
STARTS_PER_DIMENSION = 5

# ============================================================================
# Simulation Study
# ============================================================================
SIM_GRID = (0.0, 4.0, 41)
SIM_REPLICATES = 20
SIM_JITTER = 1e-8
SIM_SIGMA_A = (0.0225, 0.01)
SIM_SIGMA_B = (0.1, 0.05, 1.5)
