"""Constants and messages used throughout the application"""

# Exit codes for the command-line surface
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

# Sampler defaults (M draws after a burn-in, as used for the published validation study)
DEFAULT_SAMPLES = 2000
DEFAULT_BURN_IN = 1000
TARGET_ACCEPTANCE = 0.44
ADAPTATION_BATCH = 50
INITIAL_PROPOSAL_SD = 1.0
MAX_ADAPTATION_STEP = 0.5

# Two-fit iteration
MIN_KAPPA = 2
INITIAL_KAPPA = 2
DEFAULT_KAPPA_CAP = 400
DEFAULT_MAX_ITERATIONS = 50
BETA_TOLERANCE = 1e-3

# Numerical thresholds
PC_RANK_TOLERANCE = 1e-10
SIGN_TOLERANCE = 1e-10

# Detection / attribution (one-sided 5% and two-sided 5% normal quantiles)
TRUE_BETA = 1.0
DETECTION_THRESHOLD = 1.64
ATTRIBUTION_THRESHOLD = 1.96
DETECTION_PROBABILITY_CUTOFF = 0.05
ATTRIBUTION_LEVEL = 0.95
DEFAULT_CREDIBLE_LEVEL = 0.90

# Trend extraction
DEFAULT_WINDOW_YEARS = 25
TREND_SCALE_YEARS = 25.0

# Kernel and likelihood option names
KERNEL_HALF_ANGLE = "half_angle"
KERNEL_AS_PRINTED = "as_printed"
KERNEL_VARIANTS = (KERNEL_HALF_ANGLE, KERNEL_AS_PRINTED)
DF_KAPPA_MINUS_ONE = "kappa_minus_one"
DF_KAPPA = "kappa"
DF_CONVENTIONS = (DF_KAPPA_MINUS_ONE, DF_KAPPA)

# Basis cache
BASIS_CACHE_VERSION = 1

# Pre-industrial control and historical trend-field counts per CMIP6 model
CMIP6_CONTROL_COUNTS = {
    "ACCESS-ESM1-5": 36,
    "AWI-CM-1-1-MR": 13,
    "CanESM5": 57,
    "CESM2": 43,
    "CESM2-FV2": 18,
    "CESM2-WACCM": 17,
    "CESM2-WACCM-FV2": 19,
    "FGOALS-g3": 27,
    "FIO-ESM-2-0": 20,
    "GISS-E2-1-G": 66,
    "MIROC6": 28,
    "NESM3": 16,
    "NorCPM1": 48,
    "NorESM2-MM": 15,
    "SAM0-UNICON": 27,
    "UKESM1-0-LL": 61,
}
CMIP6_HISTORICAL_COUNTS = {
    "ACCESS-ESM1-5": 40,
    "CanESM5": 65,
    "GISS-E2-1-G": 46,
    "NorCPM1": 30,
    "GISS-E2-1-H": 25,
    "MIROC-ES2L": 31,
    "MPI-ESM1-2-LR": 29,
}

# Status messages
BASIS_READY_MSG = "✅ Laplacian basis ready for grid {n_lat}x{n_lon} ({n_grid} components)"
FIT_DONE_MSG = "✅ Fit converged={converged} after {iterations} iterations: kappa_post={kappa}, beta={beta:.4f} ± {sd:.4f}"
VALIDATION_DONE_MSG = "✅ Validation finished: {n_ok} fits succeeded, {n_failed} failed"
DRY_RUN_MSG = "📋 {n_tuples} (control, historical, member) tuples would be fitted"
PARTIAL_OUTPUT_MSG = "⚠️ Outputs in {out_dir} may be partial"
