"""
Environment-backed defaults for the scattering engines and the CLI.

Values are read once at import time, after an optional ``.env`` file has been
loaded. Run configs and CLI flags override these defaults.
"""

import os

try:
    from dotenv import load_dotenv
except ImportError:  # optional dependency
    load_dotenv = None


if load_dotenv:
    load_dotenv()


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be a number, got {raw!r}") from exc


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from exc


class Config:
    """
    Centralized access to environment-backed configuration.
    """

    # ODE integration
    RTOL = _float_env("SCATTER_RTOL", 1e-9)
    ATOL = _float_env("SCATTER_ATOL", 1e-12)
    MAX_STEP_FRACTION = _float_env("SCATTER_MAX_STEP_FRACTION", 0.02)
    MAX_STEPS = _int_env("SCATTER_MAX_STEPS", 200000)

    # Integration radii, as multiples of min(1/|k|, R) and max(1/|k|, R)
    R_SMALL_FACTOR = _float_env("SCATTER_R_SMALL_FACTOR", 1e-3)
    R_BIG_FACTOR = _float_env("SCATTER_R_BIG_FACTOR", 10.0)

    # Diagnostics and checks
    UNITARITY_TOL = _float_env("SCATTER_UNITARITY_TOL", 1e-6)
    COMMUTATOR_TOL = _float_env("SCATTER_COMMUTATOR_TOL", 1e-5)
    FIT_TOL = _float_env("SCATTER_FIT_TOL", 1e-6)
    ORACLE_TOL = _float_env("SCATTER_ORACLE_TOL", 5e-3)
    CONDITION_LIMIT = _float_env("SCATTER_CONDITION_LIMIT", 1e12)
    CONDITION_WARNING = _float_env("SCATTER_CONDITION_WARNING", 1e8)

    # Sources
    DRUDE_BRANCH = os.getenv("SCATTER_DRUDE_BRANCH", "principal")

    # CLI
    WORKERS = _int_env("SCATTER_WORKERS", 1)
    OUTPUT_DIR = os.getenv("SCATTER_OUTPUT_DIR", "output")
    LOG_LEVEL = os.getenv("SCATTER_LOG_LEVEL", "WARNING")
