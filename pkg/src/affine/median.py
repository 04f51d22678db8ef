"""
Median of a vector field with respect to Ker E.

Finds the rigid displacement r(x) = A x + b closest to g in the L1 norm
(sum over pixels of the pointwise Euclidean distance, spacing-weighted).
Only the vector-field entries that enter sym_grad are compared, so the
result is the L1 projection onto the discrete kernel of sym_grad.

2-D: iteratively reweighted least squares (Weiszfeld-type) from the
componentwise median, followed by a coordinate-wise polish.
1-D: the kernel is the constants and the answer is the ordinary median.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.affine.kernel import KerEElement, coordinates
from src.config.settings import Config
from src.fields.grid import VectorField
from src.operators.differential import vector_support


@dataclass(frozen=True)
class MedianResult:
    element: KerEElement
    objective: float
    iterations: int
    converged: bool


class _KerEObjective:
    """theta = (a, b1, b2) -> spacing^2 * sum |P(g - M theta)|."""

    def __init__(self, g: VectorField):
        shape = g.shape
        x1, x2 = coordinates(shape)
        x1, x2 = x1.reshape(-1), x2.reshape(-1)
        ones, zeros = np.ones_like(x1), np.zeros_like(x1)

        support = vector_support(shape).reshape(2, -1).astype(float)
        self.m1, self.m2 = support
        self.g1 = g.values[0].reshape(-1) * self.m1
        self.g2 = g.values[1].reshape(-1) * self.m2
        self.J1 = np.stack([-x2, ones, zeros], axis=1)
        self.J2 = np.stack([x1, zeros, ones], axis=1)
        self.cell = shape.cell_volume

    def pointwise(self, theta: np.ndarray) -> np.ndarray:
        r1 = self.g1 - self.m1 * (self.J1 @ theta)
        r2 = self.g2 - self.m2 * (self.J2 @ theta)
        return np.sqrt(r1 * r1 + r2 * r2)

    def __call__(self, theta: np.ndarray) -> float:
        return float(self.cell * np.sum(self.pointwise(theta)))

    def reweighted_step(self, theta: np.ndarray, eps: float) -> np.ndarray:
        weights = 1.0 / np.sqrt(self.pointwise(theta) ** 2 + eps ** 2)
        w1, w2 = weights * self.m1, weights * self.m2
        normal = self.J1.T @ (w1[:, None] * self.J1) + self.J2.T @ (w2[:, None] * self.J2)
        rhs = self.J1.T @ (w1 * self.g1) + self.J2.T @ (w2 * self.g2)
        try:
            return np.linalg.solve(normal, rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(normal, rhs, rcond=None)[0]


def median_objective(g: VectorField, e: KerEElement) -> float:
    """L1 distance between g and r on the sym_grad support."""
    if g.shape.dims == 1:
        mask = vector_support(g.shape)[0]
        return float(g.shape.cell_volume * np.sum(np.abs(g.values[0][mask] - e.offset[0])))
    return _KerEObjective(g)(e.params)


def _polish(objective: _KerEObjective, theta: np.ndarray, value: float, sweeps: int = 3) -> Tuple[np.ndarray, float]:
    theta = theta.copy()
    for _ in range(sweeps):
        improved = False
        for k in range(theta.size):
            step = max(1e-3 * abs(theta[k]), 1e-6)

            def along(t, k=k):
                trial = theta.copy()
                trial[k] = t
                return objective(trial)

            found = minimize_scalar(along, bounds=(theta[k] - step, theta[k] + step), method="bounded",
                                    options={"xatol": 1e-12})
            if found.fun < value:
                theta[k], value, improved = found.x, float(found.fun), True
        if not improved:
            break
    return theta, value


def median_ker_e(g: VectorField, tol: Optional[float] = None, max_iter: Optional[int] = None,
                 eps: Optional[float] = None) -> MedianResult:
    """
    Args:
        g: vector field on a 1-D or 2-D grid
        tol: relative objective change at which the reweighting stops
        max_iter: reweighting cap; the best iterate is returned when it is hit

    Returns:
        MedianResult with the minimising element and its objective value.
    """
    tol = Config.MEDIAN_TOL if tol is None else tol
    max_iter = Config.MEDIAN_MAX_ITER if max_iter is None else max_iter
    eps = Config.MEDIAN_EPS if eps is None else eps
    if tol < 0 or max_iter < 1:
        raise ValueError(f"Invalid median settings: tol={tol}, max_iter={max_iter}")

    if g.shape.dims == 1:
        mask = vector_support(g.shape)[0]
        element = KerEElement(None, (float(np.median(g.values[0][mask])),))
        return MedianResult(element, median_objective(g, element), 0, True)

    objective = _KerEObjective(g)
    support = vector_support(g.shape)
    theta = np.array([0.0, np.median(g.values[0][support[0]]), np.median(g.values[1][support[1]])])
    value = objective(theta)
    best_theta, best_value = theta, value

    converged = value == 0.0
    iterations = 0
    while not converged and iterations < max_iter:
        iterations += 1
        theta = objective.reweighted_step(theta, eps)
        previous, value = value, objective(theta)
        if value < best_value:
            best_theta, best_value = theta, value
        converged = abs(previous - value) <= tol * max(value, np.finfo(float).tiny)

    if best_value > 0.0:
        best_theta, best_value = _polish(objective, best_theta, best_value)
    return MedianResult(KerEElement.from_params(best_theta), best_value, iterations, converged)
