"""Environment keys, numerical defaults and file-format constants."""

# Environment variables (read after load_dotenv()).
THREADS_ENV = "REPTON_THREADS"
OUTPUT_DIR_ENV = "REPTON_OUTPUT_DIR"
LOG_LEVEL_ENV = "REPTON_LOG_LEVEL"

DEFAULT_THREADS = 1
DEFAULT_OUTPUT_DIR = "./repton_output"
DEFAULT_LOG_LEVEL = "INFO"

# Model defaults.
EVAL_FLOOR = 1e-8
MOBILITY_FLOOR = 1e-6
NOISE_FLOOR = 1e-3

# Integrator defaults.
POSITIVITY_FLOOR = 1e-4
PENALTY_STRENGTH = 1e6
# the singular V' is clipped at this fraction of the positivity floor
CLIP_FRACTION = 0.5
STABILITY_CONSTANT = 2.0
BLOW_UP_THRESHOLD = 1e12

# Tolerances.
MEAN_ZERO_TOLERANCE = 1e-10
MASS_TOLERANCE = 1e-12

# Noise streams draw normals in blocks of this many steps.
NOISE_BLOCK_STEPS = 256

# Output files.
SNAPSHOT_MAGIC = b"REPTON01"
TRAJECTORY_COLUMNS = (
    "t",
    "mass",
    "l2_norm",
    "free_energy",
    "min_value",
    "penalty_mass",
)
TRAJECTORY_FILE = "trajectory.csv"
SNAPSHOT_FILE = "final_state.bin"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"
TABLE_FILE = "table.csv"
RUN_LOG_FILE = "run.log"

# CLI exit codes.
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_VERDICT_FAILED = 2

# Verdicts.
VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_INCONCLUSIVE = "inconclusive"
VERDICT_NOT_APPLICABLE = "not_applicable"
