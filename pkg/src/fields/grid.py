"""
Grid containers for scalar, vector and symmetric-tensor data.

Fields are immutable numpy-backed dataclasses on a regular 1-D or 2-D grid.
Arrays are always stored with an explicit second axis (n2 = 1 in 1-D):

    ScalarField.values     (n1, n2)
    VectorField.values     (dims, n1, n2)
    SymTensorField.values  (1, n1, n2) in 1-D, (3, n1, n2) in 2-D ordered (t11, t22, t12)

The discrete Radon norms are spacing^d-weighted sums of pointwise
Euclidean / Frobenius norms.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np


@dataclass(frozen=True)
class GridShape:
    """Regular grid with uniform spacing in every axis."""

    dims: int
    n1: int
    n2: int = 1
    spacing: float = 1.0

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError(f"dims must be 1 or 2, got {self.dims}")
        if self.n1 < 2:
            raise ValueError(f"n1 must be at least 2, got {self.n1}")
        if self.n2 < 1:
            raise ValueError(f"n2 must be at least 1, got {self.n2}")
        if self.dims == 1 and self.n2 != 1:
            raise ValueError("1-D grids must have n2 = 1")
        if self.dims == 2 and self.n2 < 2:
            raise ValueError(f"2-D grids need n2 >= 2, got {self.n2}")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def array_shape(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dims

    @property
    def tensor_channels(self) -> int:
        return 1 if self.dims == 1 else 3

    @classmethod
    def line(cls, n: int, spacing: float = 1.0) -> "GridShape":
        return cls(dims=1, n1=n, n2=1, spacing=spacing)

    @classmethod
    def square(cls, n: int, spacing: float = 1.0) -> "GridShape":
        return cls(dims=2, n1=n, n2=n, spacing=spacing)


def _frozen(values, expected_shape, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != expected_shape:
        raise ValueError(f"{what}: expected array of shape {expected_shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: values must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.shape.array_shape, "ScalarField"))

    @classmethod
    def from_array(cls, array, spacing: float = 1.0) -> "ScalarField":
        """Wrap a 1-D array (a signal) or 2-D array (an image)."""
        arr = np.asarray(array, dtype=float)
        if arr.ndim == 1:
            return cls(GridShape.line(arr.shape[0], spacing), arr[:, None])
        if arr.ndim == 2 and arr.shape[1] == 1:
            return cls(GridShape.line(arr.shape[0], spacing), arr)
        if arr.ndim == 2:
            return cls(GridShape(2, arr.shape[0], arr.shape[1], spacing), arr)
        raise ValueError(f"Cannot build a scalar field from an array with ndim={arr.ndim}")

    @classmethod
    def zeros(cls, shape: GridShape) -> "ScalarField":
        return cls(shape, np.zeros(shape.array_shape))

    @property
    def signal(self) -> np.ndarray:
        """Values as a flat row-major vector."""
        return self.values.reshape(-1)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.shape, values)


@dataclass(frozen=True, eq=False)
class VectorField:
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        expected = (self.shape.dims,) + self.shape.array_shape
        object.__setattr__(self, "values", _frozen(self.values, expected, "VectorField"))

    @classmethod
    def zeros(cls, shape: GridShape) -> "VectorField":
        return cls(shape, np.zeros((shape.dims,) + shape.array_shape))

    def with_values(self, values) -> "VectorField":
        return VectorField(self.shape, values)


@dataclass(frozen=True, eq=False)
class SymTensorField:
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        expected = (self.shape.tensor_channels,) + self.shape.array_shape
        object.__setattr__(self, "values", _frozen(self.values, expected, "SymTensorField"))

    @classmethod
    def zeros(cls, shape: GridShape) -> "SymTensorField":
        return cls(shape, np.zeros((shape.tensor_channels,) + shape.array_shape))

    def with_values(self, values) -> "SymTensorField":
        return SymTensorField(self.shape, values)


Field = Union[ScalarField, VectorField, SymTensorField]


# ============================================================
# POINTWISE NORMS (array level, shared with the solvers)
# ============================================================

def tensor_weights(channels: int) -> np.ndarray:
    """Inner-product weights per tensor channel: t12 counts twice."""
    if channels == 1:
        return np.ones((1, 1, 1))
    return np.array([1.0, 1.0, 2.0]).reshape(3, 1, 1)


def pointwise_vec_norm(p: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(p * p, axis=0))


def pointwise_tensor_norm(q: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(tensor_weights(q.shape[0]) * q * q, axis=0))


# ============================================================
# RADON NORMS AND INNER PRODUCT
# ============================================================

def radon_norm_vec(p: VectorField) -> float:
    """Discrete Radon norm: sum over pixels of spacing^d * |p(x)|_2."""
    return float(p.shape.cell_volume * pointwise_vec_norm(p.values).sum())


def radon_norm_tensor(q: SymTensorField) -> float:
    """Discrete Radon norm with the pointwise Frobenius norm sqrt(t11² + t22² + 2 t12²)."""
    return float(q.shape.cell_volume * pointwise_tensor_norm(q.values).sum())


def inner(a: Field, b: Field) -> float:
    """
    Euclidean inner product over all stored components.

    For tensor fields the t12 channel is weighted by 2 so that the result equals
    the full symmetric-matrix inner product sum_ij a_ij b_ij.
    """
    if type(a) is not type(b):
        raise ValueError(f"Cannot take inner product of {type(a).__name__} and {type(b).__name__}")
    if a.values.shape != b.values.shape:
        raise ValueError(f"Shape mismatch: {a.values.shape} vs {b.values.shape}")

    if isinstance(a, SymTensorField):
        return float(np.sum(tensor_weights(a.values.shape[0]) * a.values * b.values))
    return float(np.sum(a.values * b.values))


def l2_norm(u: ScalarField) -> float:
    """Continuum-scaled L2 norm sqrt(spacing^d * sum u²)."""
    return float(np.sqrt(u.shape.cell_volume * np.sum(u.values * u.values)))
