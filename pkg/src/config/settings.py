# config.py
import hashlib
import os
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv


load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, default))


class Config:
    # Primal-dual solver
    SOLVER_METHOD = os.getenv("TGV_METHOD", "admm")  # or "pdhg"
    SOLVER_MAX_ITER = _env_int("TGV_MAX_ITER", 20000)
    SOLVER_TOL = _env_float("TGV_TOL", 1e-8)
    SOLVER_METRIC = os.getenv("TGV_METRIC", "relative-iterate-change")  # or "primal-dual-gap"
    STEP_PRODUCT = 0.99  # tau * sigma * ||K||^2
    CHECK_EVERY = 10  # convergence window, in iterations

    # ADMM penalty balancing
    PENALTY_BALANCE = 10.0  # residual ratio that triggers a change
    PENALTY_FACTOR = 2.0
    PENALTY_RANGE = 1e4  # rho stays within this factor of its start

    # Operator norm estimation
    POWER_ITER_MAX = _env_int("TGV_POWER_ITER_MAX", 200)
    POWER_ITER_TOL = 1e-12
    POWER_ITER_MARGIN = 1.01  # safety factor on the estimated norm

    # Ker E median
    MEDIAN_EPS = 1e-9
    MEDIAN_MAX_ITER = 500
    MEDIAN_TOL = 1e-12

    # Harness
    NOISE_SIGMA = _env_float("TGV_NOISE_SIGMA", 0.1)
    SEED = _env_int("TGV_SEED", 42)
    # Generated test images cover a square of this side length, spacing = extent / n.
    DOMAIN_EXTENT = _env_float("TGV_DOMAIN_EXTENT", 256.0)

    # Threshold detection (oned) and regime verdicts (harness)
    DETECT_TOL = 1e-6
    MATCH_TOL = 1e-4
    BETA_BRACKET = (1e-6, 1.0)
    BISECTION_STEPS = 40
    EQUIVALENCE_TOL = 1e-3
    DIFFER_TOL = 1e-2
    REGRESSION_TOL = 1e-3
    KER_E_TOL = 1e-6
    CORRECTION_BEND_TOL = 1e-3  # ||E w|| * extent / ||w|| for the affine-correction verdict
    LARGE_RATIO = 1e4

    # Output
    OUTPUT_DIR = os.getenv("TGV_OUTPUT_DIR", "outputs")

    @staticmethod
    def solver_defaults() -> Dict[str, Any]:
        """Default SolverConfig keyword arguments."""
        return {
            "max_iter": Config.SOLVER_MAX_ITER,
            "tol": Config.SOLVER_TOL,
            "metric": Config.SOLVER_METRIC,
            "method": Config.SOLVER_METHOD,
            "p": 2,
        }


def load_config_file(path: Optional[str]) -> Dict[str, str]:
    """
    Read a plain-text key=value file (one pair per line, '#' comments).

    Keys are normalised to the CLI flag spelling with underscores
    (``max-iter`` and ``max_iter`` are the same key).

    Raises:
        OSError: if the file does not exist.
    """
    if not path:
        return {}
    if not os.path.isfile(path):
        raise OSError(f"Config file not found: {path}")

    values = dotenv_values(path)
    return {
        key.strip().lower().replace("-", "_"): value.strip()
        for key, value in values.items()
        if value is not None and value.strip() != ""
    }


def config_hash(mapping: Mapping[str, Any]) -> str:
    """Stable short hash of a flat mapping (sorted key=value lines)."""
    lines = [f"{key}={_canonical(mapping[key])}" for key in sorted(mapping)]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:12]


def _canonical(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    return str(value)
