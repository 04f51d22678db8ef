from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.fields.grid import GridShape, VectorField


def coordinates(shape: GridShape) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pixel-centre coordinates relative to the grid centre, as (n1, n2) arrays.

    Computed from integers so that x[n-1-i] == -x[i] exactly.
    """
    i, j = np.indices(shape.array_shape)
    half = 0.5 * shape.spacing
    x1 = (2 * i - (shape.n1 - 1)) * half
    x2 = (2 * j - (shape.n2 - 1)) * half
    if shape.dims == 1:
        x2 = np.zeros_like(x1)
    return x1, x2


@dataclass(frozen=True)
class KerEElement:
    """Rigid displacement r(x) = A x + b with A = [[0, -a], [a, 0]] (no ``a`` in 1-D)."""

    skew: Optional[float]
    offset: Tuple[float, ...]

    def __post_init__(self):
        offset = tuple(float(b) for b in self.offset)
        if len(offset) not in (1, 2):
            raise ValueError(f"offset must have 1 or 2 entries, got {len(offset)}")
        if len(offset) == 1 and self.skew is not None:
            raise ValueError("1-D kernel elements have no skew part")
        if len(offset) == 2 and self.skew is None:
            raise ValueError("2-D kernel elements need a skew part")
        values = offset + ((float(self.skew),) if self.skew is not None else ())
        if not np.all(np.isfinite(values)):
            raise ValueError("KerEElement entries must be finite")
        object.__setattr__(self, "offset", offset)

    @property
    def dims(self) -> int:
        return len(self.offset)

    @property
    def params(self) -> np.ndarray:
        """Parameter vector (a, b1, b2) in 2-D, (b1,) in 1-D."""
        if self.dims == 1:
            return np.array(self.offset)
        return np.array((self.skew,) + self.offset)

    @classmethod
    def from_params(cls, theta) -> "KerEElement":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size == 1:
            return cls(None, (theta[0],))
        if theta.size == 3:
            return cls(theta[0], (theta[1], theta[2]))
        raise ValueError(f"Expected 1 or 3 parameters, got {theta.size}")

    @classmethod
    def zero(cls, dims: int) -> "KerEElement":
        return cls(None, (0.0,)) if dims == 1 else cls(0.0, (0.0, 0.0))


def eval_ker_e(e: KerEElement, shape: GridShape) -> VectorField:
    """Sample r(x) = A x + b on the centred pixel grid."""
    if e.dims != shape.dims:
        raise ValueError(f"Element is {e.dims}-D but grid is {shape.dims}-D")

    if shape.dims == 1:
        return VectorField(shape, np.full((1,) + shape.array_shape, e.offset[0]))

    x1, x2 = coordinates(shape)
    a = e.skew
    return VectorField(shape, np.stack([-a * x2 + e.offset[0], a * x1 + e.offset[1]]))
