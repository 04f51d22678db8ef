"""
Discrete gradient D, symmetrised gradient E and their negative adjoints.

Conventions (all arrays carry an explicit second axis, see src.fields.grid):

- grad: forward differences, the last index along each axis is 0.
- Channel k of a vector field lives on indices 0..n_k-2 along axis k; its last
  entry along its own axis never enters sym_grad. With this support
  sym_grad(grad(affine)) and sym_grad(rigid displacement) vanish everywhere.
- div_vec = -grad^T and div_tensor = -sym_grad^T, where the tensor inner
  product weights t12 by 2.

Array-level functions (suffix ``_array``) are used inside the solver loop;
field-level wrappers are the public operations.
"""

from typing import Tuple

import numpy as np

from src.fields.grid import GridShape, ScalarField, SymTensorField, VectorField


def _span(axis: int, start: int, stop: int, ndim: int = 2) -> Tuple[slice, ...]:
    index = [slice(None)] * ndim
    index[axis] = slice(start, stop)
    return tuple(index)


def _forward(v: np.ndarray, axis: int, h: float, skip: int = 0) -> np.ndarray:
    """(v[i+1] - v[i]) / h for i <= n-2-skip along ``axis``, 0 elsewhere."""
    out = np.zeros_like(v)
    count = v.shape[axis] - 1 - skip
    if count <= 0:
        return out
    out[_span(axis, 0, count)] = (v[_span(axis, 1, count + 1)] - v[_span(axis, 0, count)]) / h
    return out


def _backward(q: np.ndarray, axis: int, h: float, skip: int = 0) -> np.ndarray:
    """Exact negative adjoint of ``_forward`` with the same ``skip``."""
    out = np.zeros_like(q)
    count = q.shape[axis] - 1 - skip
    if count <= 0:
        return out
    active = q[_span(axis, 0, count)]
    out[_span(axis, 0, count)] += active
    out[_span(axis, 1, count + 1)] -= active
    return out / h


def _corner_mask(q12: np.ndarray) -> np.ndarray:
    masked = q12.copy()
    masked[-1, :] = 0.0
    masked[:, -1] = 0.0
    return masked


# ============================================================
# ARRAY LEVEL
# ============================================================

def grad_array(u: np.ndarray, h: float, dims: int) -> np.ndarray:
    return np.stack([_forward(u, k, h) for k in range(dims)])


def div_vec_array(p: np.ndarray, h: float) -> np.ndarray:
    div = np.zeros(p.shape[1:])
    for k in range(p.shape[0]):
        div += _backward(p[k], k, h)
    return div


def sym_grad_array(w: np.ndarray, h: float) -> np.ndarray:
    if w.shape[0] == 1:
        return _forward(w[0], 0, h, skip=1)[None]

    t11 = _forward(w[0], 0, h, skip=1)
    t22 = _forward(w[1], 1, h, skip=1)
    t12 = 0.5 * (_forward(w[0], 1, h) + _forward(w[1], 0, h))
    return np.stack([t11, t22, _corner_mask(t12)])


def div_tensor_array(q: np.ndarray, h: float) -> np.ndarray:
    if q.shape[0] == 1:
        return _backward(q[0], 0, h, skip=1)[None]

    q12 = _corner_mask(q[2])
    d1 = _backward(q[0], 0, h, skip=1) + _backward(q12, 1, h)
    d2 = _backward(q12, 0, h) + _backward(q[1], 1, h, skip=1)
    return np.stack([d1, d2])


# ============================================================
# STACKED OPERATORS (primal-dual K and K^T)
# ============================================================

def tgv_forward(u: np.ndarray, w: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """K(u, w) = (grad u - w, sym_grad w)."""
    return grad_array(u, h, w.shape[0]) - w, sym_grad_array(w, h)


def tgv_adjoint(p: np.ndarray, q: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """K^T(p, q) = (-div p, -p - div_tensor q)."""
    return -div_vec_array(p, h), -p - div_tensor_array(q, h)


def second_order_array(u: np.ndarray, h: float, dims: int) -> np.ndarray:
    """sym_grad(grad u); in 1-D the interior second difference."""
    return sym_grad_array(grad_array(u, h, dims), h)


def second_order_adjoint_array(q: np.ndarray, h: float) -> np.ndarray:
    return div_vec_array(div_tensor_array(q, h), h)


def analytic_bound_sq(operator: str, dims: int, h: float) -> float:
    """Upper bound on ||K||^2 from the stencil coefficients."""
    grad_sq = 4.0 * dims / h ** 2
    sym_sq = 4.0 / h ** 2 if dims == 1 else 8.0 / h ** 2
    if operator == "grad":
        return grad_sq
    if operator == "sym_grad":
        return sym_sq
    if operator == "tgv":
        return max(2.0 * grad_sq, 2.0 + sym_sq)
    if operator == "tv2":
        return grad_sq * sym_sq
    raise ValueError(f"Unknown operator '{operator}'")


# ============================================================
# FIELD LEVEL
# ============================================================

def grad(u: ScalarField) -> VectorField:
    shape = u.shape
    return VectorField(shape, grad_array(u.values, shape.spacing, shape.dims))


def sym_grad(w: VectorField) -> SymTensorField:
    return SymTensorField(w.shape, sym_grad_array(w.values, w.shape.spacing))


def div_vec(p: VectorField) -> ScalarField:
    return ScalarField(p.shape, div_vec_array(p.values, p.shape.spacing))


def div_tensor(q: SymTensorField) -> VectorField:
    return VectorField(q.shape, div_tensor_array(q.values, q.shape.spacing))


def second_difference(u: ScalarField) -> SymTensorField:
    return SymTensorField(u.shape, second_order_array(u.values, u.shape.spacing, u.shape.dims))


def vector_support(shape: GridShape) -> np.ndarray:
    """Boolean mask (dims, n1, n2) of the vector-field entries seen by sym_grad."""
    mask = np.ones((shape.dims,) + shape.array_shape, dtype=bool)
    mask[0, -1, :] = False
    if shape.dims == 2:
        mask[1, :, -1] = False
    return mask


def check_grid(shape: GridShape) -> None:
    """Reject grids on which forward differences are undefined."""
    if shape.n1 < 2 or (shape.dims == 2 and shape.n2 < 2):
        raise ValueError(f"Grid {shape.n1}x{shape.n2} too small for finite differences")
