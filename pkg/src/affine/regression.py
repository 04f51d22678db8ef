from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.affine.kernel import coordinates
from src.fields.grid import GridShape, ScalarField


@dataclass(frozen=True)
class AffineFit:
    """phi(x) = c0 + c1 x1 + c2 x2 on centred coordinates (c2 is None in 1-D)."""

    c0: float
    c1: float
    c2: Optional[float] = None

    def __post_init__(self):
        coefficients = [self.c0, self.c1] + ([] if self.c2 is None else [self.c2])
        if not np.all(np.isfinite(coefficients)):
            raise ValueError(f"AffineFit coefficients must be finite: {coefficients}")

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.c0, self.c1] + ([] if self.c2 is None else [self.c2]))

    def evaluate(self, shape: GridShape) -> ScalarField:
        x1, x2 = coordinates(shape)
        values = self.c0 + self.c1 * x1
        if self.c2 is not None:
            values = values + self.c2 * x2
        return ScalarField(shape, values)


def _design(shape: GridShape) -> np.ndarray:
    x1, x2 = coordinates(shape)
    columns = [np.ones(shape.size), x1.reshape(-1)]
    if shape.dims == 2:
        columns.append(x2.reshape(-1))
    return np.stack(columns, axis=1)


def linear_regression(f: ScalarField) -> AffineFit:
    """L2-closest affine function to f, from the normal equations."""
    design = _design(f.shape)
    normal = design.T @ design
    try:
        c = np.linalg.solve(normal, design.T @ f.signal)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"Singular normal equations for grid {f.shape}") from e

    if f.shape.dims == 1:
        return AffineFit(float(c[0]), float(c[1]))
    return AffineFit(float(c[0]), float(c[1]), float(c[2]))


def regression_field(f: ScalarField) -> ScalarField:
    return linear_regression(f).evaluate(f.shape)
