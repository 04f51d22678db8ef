from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np

from src.config.settings import Config
from src.fields.grid import GridShape
from src.operators.differential import (
    analytic_bound_sq,
    div_tensor_array,
    div_vec_array,
    grad_array,
    second_order_adjoint_array,
    second_order_array,
    sym_grad_array,
    tgv_adjoint,
    tgv_forward,
)


OPERATORS = ("grad", "sym_grad", "tgv", "tv2")


@dataclass(frozen=True)
class OpNormEstimate:
    value: float  # largest singular value
    iterations: int
    residual: float  # eigen-residual of K^T K, on the singular-value scale
    operator: str = "tgv"
    bound: float = float("inf")  # analytic ceiling for value


def _normal_map(shape: GridShape, operator: str) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """x -> K^T K x on a list of primal blocks."""
    h, d = shape.spacing, shape.dims

    if operator == "grad":
        return lambda x: [-div_vec_array(grad_array(x[0], h, d), h)]
    if operator == "sym_grad":
        return lambda x: [-div_tensor_array(sym_grad_array(x[0], h), h)]
    if operator == "tv2":
        return lambda x: [second_order_adjoint_array(second_order_array(x[0], h, d), h)]

    def tgv_normal(x):
        p, q = tgv_forward(x[0], x[1], h)
        return list(tgv_adjoint(p, q, h))

    return tgv_normal


def _start_vector(shape: GridShape, operator: str) -> List[np.ndarray]:
    i, j = np.indices(shape.array_shape)
    checker = np.where((i + j) % 2 == 0, 1.0, -1.0)
    rng = np.random.default_rng(0)

    def block(channels: Optional[int]) -> np.ndarray:
        base = checker if channels is None else np.broadcast_to(checker, (channels,) + shape.array_shape)
        return base + 1e-3 * rng.standard_normal(base.shape)

    if operator in ("grad", "tv2"):
        return [block(None)]
    if operator == "sym_grad":
        return [block(shape.dims)]
    return [block(None), block(shape.dims)]


def _dot(a: List[np.ndarray], b: List[np.ndarray]) -> float:
    return float(sum(np.sum(x * y) for x, y in zip(a, b)))


def power_iteration(shape: GridShape, operator: str = "tgv", max_iter: Optional[int] = None,
                    tol: Optional[float] = None) -> OpNormEstimate:
    """Largest singular value of a named operator by power iteration on K^T K."""
    if operator not in OPERATORS:
        raise ValueError(f"operator must be one of {OPERATORS}, got '{operator}'")
    max_iter = Config.POWER_ITER_MAX if max_iter is None else max_iter
    tol = Config.POWER_ITER_TOL if tol is None else tol

    apply = _normal_map(shape, operator)
    x = _start_vector(shape, operator)
    scale = np.sqrt(_dot(x, x))
    x = [b / scale for b in x]

    eigen, residual, iterations = 0.0, np.inf, 0
    for iterations in range(1, max_iter + 1):
        y = apply(x)
        previous, eigen = eigen, _dot(x, y)
        miss = [b - eigen * a for a, b in zip(x, y)]
        residual = np.sqrt(_dot(miss, miss))
        norm_y = np.sqrt(_dot(y, y))
        if norm_y == 0.0:
            break
        x = [b / norm_y for b in y]
        if abs(eigen - previous) <= tol * max(eigen, np.finfo(float).tiny):
            break

    value = float(np.sqrt(max(eigen, 0.0)))
    return OpNormEstimate(
        value=value,
        iterations=iterations,
        residual=float(residual / max(2.0 * value, np.finfo(float).tiny)),
        operator=operator,
        bound=float(np.sqrt(analytic_bound_sq(operator, shape.dims, shape.spacing))),
    )


@lru_cache(maxsize=64)
def estimate_op_norm(shape: GridShape, operator: str = "tgv") -> OpNormEstimate:
    """Cached power-iteration estimate with the default iteration cap."""
    return power_iteration(shape, operator)


def step_norm(shape: GridShape, operator: str) -> float:
    """Norm used for step sizes: the estimate with a safety margin, capped by the analytic bound."""
    estimate = estimate_op_norm(shape, operator)
    return min(estimate.value * Config.POWER_ITER_MARGIN, estimate.bound)
