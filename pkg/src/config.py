"""Configuration constants for the lattice Boltzmann energy toolkit.

This module centralizes all magic values, default paths, filenames and
thresholds used across the project's modules. All constants are UPPERCASE,
use type hints, and are documented below for clarity and maintainability.

Constants:

- PROJECT_ROOT (Path): Absolute path to the project root directory.
- DATA_DIR (Path): Path to the 'data' directory.
- LOG_DIR (Path): Path to the 'logs' directory.
- OUTPUT_DIR (Path): Default directory for command outputs.

Reference data
- CLOCK_SWEEP_REFERENCE_CSV (Path): Published full-node clock sweep.
- OPTIMIZATION_FLOW_REFERENCE_CSV (Path): Published optimization-flow rows.
- SYNTHETIC_LOG_FIXTURE (Path): Synthetic 4-GPU telemetry log.
- SNAPSHOT_METADATA_TEMPLATE (Path): Jinja2 template of the snapshot sidecar.

Lattice and solver
- DEFAULT_RHO (float): Rest density in lattice units.
- MAX_MACH (float): Largest accepted ``|u|/c_s`` (second-order truncation).
- RESIDUAL_WINDOW (int): Steps between two velocity residual evaluations.
- DIVERGENCE_CHECK_INTERVAL (int): Steps between NaN/Inf scans.
- MAX_GRID_EDGE (int): Largest accepted grid edge (desk scale).
- DEFAULT_CAVITY_N / DEFAULT_REYNOLDS / DEFAULT_LID_VELOCITY: Cavity defaults.
- DEFAULT_STEPS (int): Default number of time steps.
- CAVITY_MAX_STEPS (int): Step cap used when running to a residual target.
- TAYLOR_GREEN_MAX_AMPLITUDE (float): Largest accepted vortex amplitude.
- TAYLOR_GREEN_MIN_R2 (float): Minimum R^2 of the exponential decay fit.
- TAYLOR_GREEN_SAMPLE_EVERY (int): Steps between kinetic energy samples.
- TAYLOR_GREEN_SKIP_STEPS (int): Initial steps excluded from the fit.

Performance model
- OPS_PER_UPDATE (int): Operations per lattice site update.
- MEM_BANDWIDTH_BYTES (float): Nominal device memory bandwidth in bytes/s.
- GPUS_PER_NODE (int): Accelerators in one compute node.
- PRODUCTION_LATTICE_SITES (int): Sites of the production lattice (512^3).
- PRODUCTION_STEPS (int): Time steps of the production runs.

Telemetry
- SMI_FIELD_COUNT (int): Fields per telemetry line.
- SMI_TIMESTAMP_FORMAT (str): ``strptime`` format of the timestamp field.
- SMI_MISSING_VALUES (frozenset[str]): Tokens meaning "value not available".
- SMI_LOG_SUFFIX (str): File name suffix of per-node telemetry logs.
- NOMINAL_SAMPLE_PERIOD_S (float): Expected sampling period.
- PLATEAU_UTIL_MIN (float): Utilization threshold of a busy sample.
- PLATEAU_POWER_FRACTION (float): Fallback power threshold fraction.
- PLATEAU_MIN_RUN (int): Minimum samples of an accepted plateau.
- PLATEAU_IDLE_SAMPLES (int): Leading samples averaged as the idle floor.
- PLATEAU_MIN_POWER_RISE_W (float): Minimum plateau rise over idle (fallback).
- MIN_PLATEAU_TRACE_SAMPLES (int): Minimum samples for plateau detection.

Sweep
- SLOWDOWN_BUDGETS_PCT (tuple[float, ...]): Budgets of the recommended clocks.

Logging
- LOG_FORMAT (str): Format string for logging.
- LOG_FILENAME_CLI (str): Log filename of the command line program.
"""

from pathlib import Path

# --- Project-wide Paths ---
PROJECT_ROOT: Path = Path(__file__).resolve().parent.parent
DATA_DIR: Path = PROJECT_ROOT / "data"
LOG_DIR: Path = PROJECT_ROOT / "logs"
OUTPUT_DIR: Path = PROJECT_ROOT / "output"

# --- Reference data ---
CLOCK_SWEEP_REFERENCE_CSV: Path = DATA_DIR / "reference" / "clock_sweep_full_node.csv"
OPTIMIZATION_FLOW_REFERENCE_CSV: Path = (
    DATA_DIR / "reference" / "optimization_flow.csv"
)
SYNTHETIC_LOG_FIXTURE: Path = DATA_DIR / "fixtures" / "synthetic_node.nvidiasmi.txt"
SNAPSHOT_METADATA_TEMPLATE: Path = DATA_DIR / "templates" / "snapshot_metadata.txt.j2"

# --- Lattice and solver ---
DEFAULT_RHO: float = 1.0
MAX_MACH: float = 0.3
RESIDUAL_WINDOW: int = 100
DIVERGENCE_CHECK_INTERVAL: int = 100
MAX_GRID_EDGE: int = 128
DEFAULT_CAVITY_N: int = 32
DEFAULT_REYNOLDS: float = 100.0
DEFAULT_LID_VELOCITY: float = 0.05
DEFAULT_STEPS: int = 2000
CAVITY_MAX_STEPS: int = 60000
TAYLOR_GREEN_MAX_AMPLITUDE: float = 0.05
TAYLOR_GREEN_MIN_R2: float = 0.99
TAYLOR_GREEN_SAMPLE_EVERY: int = 10
TAYLOR_GREEN_SKIP_STEPS: int = 10

# --- Performance model ---
OPS_PER_UPDATE: int = 250
MEM_BANDWIDTH_BYTES: float = 1.6e12
GPUS_PER_NODE: int = 4
PRODUCTION_LATTICE_SITES: int = 512**3
PRODUCTION_STEPS: int = 40000

# --- Telemetry ---
SMI_FIELD_COUNT: int = 9
SMI_TIMESTAMP_FORMAT: str = "%Y/%m/%d %H:%M:%S.%f"
SMI_MISSING_VALUES: frozenset[str] = frozenset(
    {"[N/A]", "N/A", "[Not Supported]", "[Unknown Error]"}
)
SMI_LOG_SUFFIX: str = ".nvidiasmi.txt"
NOMINAL_SAMPLE_PERIOD_S: float = 1.0
PLATEAU_UTIL_MIN: float = 90.0
PLATEAU_POWER_FRACTION: float = 0.5
PLATEAU_MIN_RUN: int = 3
PLATEAU_IDLE_SAMPLES: int = 5
PLATEAU_MIN_POWER_RISE_W: float = 20.0
MIN_PLATEAU_TRACE_SAMPLES: int = 5

# --- Sweep ---
SLOWDOWN_BUDGETS_PCT: tuple[float, ...] = (1.0, 5.0)

# --- Logging ---
LOG_FORMAT: str = (
    "%(asctime)s - %(levelname)s - %(module)s - %(funcName)s - %(message)s"
)
LOG_FILENAME_CLI: str = "lbm_energy.log"
