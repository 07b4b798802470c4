import os
import sys
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: str) -> float:
    return float(os.environ.get(name, default))


def _env_int(name: str, default: str) -> int:
    return int(os.environ.get(name, default))


# === Reproducibility ===
# Master seed for every randomized operation. Unset means "generate one and log it".
_seed_raw = os.environ.get("LTNET_SEED", "").strip()
SEED: int | None = int(_seed_raw) if _seed_raw else None

# === Numerical tolerances ===
# Relative tolerance: sign decisions use REL_TOL * max(1, ||A||_inf).
REL_TOL = _env_float("LTNET_TOL", "1e-9")
# Minors are counted positive only above this (scaled) margin.
MINOR_TOL = _env_float("LTNET_MINOR_TOL", "1e-12")
# solve() reports singularity above this condition estimate.
SINGULAR_COND = _env_float("LTNET_SINGULAR_COND", "1e12")

# === Dimension caps ===
EIG_DIM_CAP = _env_int("LTNET_EIG_CAP", "64")
PMATRIX_DIM_CAP = _env_int("LTNET_PMATRIX_CAP", "20")
REGION_DIM_CAP = _env_int("LTNET_REGION_CAP", "16")
# Enumeration above this size logs a warning (3^12 ~ 531k patterns).
REGION_WARN_DIM = _env_int("LTNET_REGION_WARN", "12")
CYCLE_DIM_CAP = _env_int("LTNET_CYCLE_CAP", "12")

# === Simulation ===
SIM_DT = _env_float("LTNET_DT", "0.01")
SIM_T_END = _env_float("LTNET_T_END", "2000")
STEADY_FRACTION = _env_float("LTNET_WINDOW", "0.05")
# Steady-window range below CONVERGENCE_RTOL * m_i on every channel counts as converged.
CONVERGENCE_RTOL = _env_float("LTNET_CONVERGENCE_RTOL", "1e-5")

# === Oscillation metrics ===
EPSILON = _env_float("LTNET_EPSILON", "0.1")
SPECTRAL_FLOOR = _env_float("LTNET_SPECTRAL_FLOOR", "1e-12")
CHI_OSC_FLOOR = _env_float("LTNET_CHI_OSC_FLOOR", "1e-16")

# === Threshold fit (Gaussian mixture) ===
GMM_MAX_ITER = _env_int("LTNET_GMM_MAX_ITER", "200")
GMM_TOL = _env_float("LTNET_GMM_TOL", "1e-8")
GMM_SEED = _env_int("LTNET_GMM_SEED", "0")

# === Studies ===
WORKERS = _env_int("LTNET_WORKERS", str(os.cpu_count() or 1))
PROGRESS_EVERY = _env_float("LTNET_PROGRESS_EVERY", "0.05")

# === Results store ===
DB_PATH = Path(
    os.environ.get(
        "LTNET_DB_PATH",
        str(Path.home() / ".ltnet" / "ltnet.db"),
    )
)

# === Analysis server ===
SERVER_PORT = _env_int("LTNET_SERVER_PORT", "8420")

# === API Keys (bearer auth for the analysis server; empty disables auth) ===
API_KEYS: list[str] = [
    k.strip()
    for k in os.environ.get("API_KEYS", "").split(",")
    if k.strip()
]


# Settings a study worker must share with the parent process. Spawned workers
# re-import this module and would otherwise fall back to the environment.
WORKER_SETTINGS = (
    "REL_TOL", "MINOR_TOL", "SINGULAR_COND",
    "EIG_DIM_CAP", "PMATRIX_DIM_CAP", "REGION_DIM_CAP", "REGION_WARN_DIM", "CYCLE_DIM_CAP",
    "SIM_DT", "SIM_T_END", "STEADY_FRACTION", "CONVERGENCE_RTOL",
    "EPSILON", "SPECTRAL_FLOOR", "CHI_OSC_FLOOR",
)


def worker_settings() -> dict:
    """Current values of WORKER_SETTINGS, including runtime overrides such as --tol."""
    return {name: globals()[name] for name in WORKER_SETTINGS}


def apply_worker_settings(settings: dict) -> None:
    unknown = set(settings) - set(WORKER_SETTINGS)
    if unknown:
        raise KeyError(f"not a worker setting: {', '.join(sorted(unknown))}")
    globals().update(settings)


def validate_environment() -> list[str]:
    """Validate numeric settings.
    Returns a list of error messages. Empty list means all good.
    """
    errors: list[str] = []

    for name in ("REL_TOL", "MINOR_TOL", "SINGULAR_COND", "CONVERGENCE_RTOL", "SPECTRAL_FLOOR", "CHI_OSC_FLOOR", "GMM_TOL"):
        if globals()[name] <= 0:
            errors.append(f"{name} must be positive (got {globals()[name]})")

    for name in ("EIG_DIM_CAP", "PMATRIX_DIM_CAP", "REGION_DIM_CAP", "CYCLE_DIM_CAP", "GMM_MAX_ITER", "WORKERS"):
        if globals()[name] < 1:
            errors.append(f"{name} must be at least 1 (got {globals()[name]})")

    if SIM_DT <= 0:
        errors.append(f"LTNET_DT must be positive (got {SIM_DT})")
    elif SIM_DT >= SIM_T_END:
        errors.append(f"LTNET_DT ({SIM_DT}) must be smaller than LTNET_T_END ({SIM_T_END})")

    if not 0 < STEADY_FRACTION <= 1:
        errors.append(f"LTNET_WINDOW must lie in (0, 1] (got {STEADY_FRACTION})")
    if not 0 < EPSILON < 1:
        errors.append(f"LTNET_EPSILON must lie in (0, 1) (got {EPSILON})")
    if REGION_WARN_DIM > REGION_DIM_CAP:
        errors.append("LTNET_REGION_WARN exceeds LTNET_REGION_CAP")

    return errors


def print_config(stream=None):
    """Print current configuration to stderr (API keys redacted)."""
    out = stream or sys.stderr
    print("=== ltnet configuration ===", file=out)
    print(f"  SEED:              {SEED if SEED is not None else '(generated per run)'}", file=out)
    print(f"  REL_TOL:           {REL_TOL}", file=out)
    print(f"  MINOR_TOL:         {MINOR_TOL}", file=out)
    print(f"  SINGULAR_COND:     {SINGULAR_COND}", file=out)
    print(f"  EIG_DIM_CAP:       {EIG_DIM_CAP}", file=out)
    print(f"  PMATRIX_DIM_CAP:   {PMATRIX_DIM_CAP}", file=out)
    print(f"  REGION_DIM_CAP:    {REGION_DIM_CAP} (warn above {REGION_WARN_DIM})", file=out)
    print(f"  CYCLE_DIM_CAP:     {CYCLE_DIM_CAP}", file=out)
    print(f"  SIM_DT / T_END:    {SIM_DT} / {SIM_T_END}", file=out)
    print(f"  STEADY_FRACTION:   {STEADY_FRACTION}", file=out)
    print(f"  EPSILON:           {EPSILON}", file=out)
    print(f"  WORKERS:           {WORKERS}", file=out)
    print(f"  DB_PATH:           {DB_PATH}", file=out)
    print(f"  SERVER_PORT:       {SERVER_PORT}", file=out)
    print(f"  API_KEYS:          {len(API_KEYS)} configured", file=out)
