"""
Sparse matrices of grad and sym_grad acting on C-order flattened arrays.

Rows and columns follow the array layout of src.operators.differential
channel by channel, so ``grad_matrix(shape) @ u.ravel()`` equals
``grad_array(u, h, dims).ravel()``. Built once per grid for the splitting
solver's factorised linear step.
"""

from functools import lru_cache

import numpy as np
from scipy import sparse

from src.fields.grid import GridShape, tensor_weights


def _forward_1d(n: int, h: float, skip: int = 0) -> sparse.csr_matrix:
    """(v[i+1] - v[i]) / h on rows i <= n-2-skip, empty rows elsewhere."""
    count = n - 1 - skip
    if count <= 0:
        return sparse.csr_matrix((n, n))
    rows = np.arange(count)
    data = np.concatenate([-np.ones(count), np.ones(count)]) / h
    return sparse.csr_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([rows, rows + 1]))), shape=(n, n)
    )


def _along(shape: GridShape, axis: int, skip: int = 0) -> sparse.csr_matrix:
    n1, n2 = shape.array_shape
    h = shape.spacing
    if axis == 0:
        return sparse.kron(_forward_1d(n1, h, skip), sparse.identity(n2), format="csr")
    return sparse.kron(sparse.identity(n1), _forward_1d(n2, h, skip), format="csr")


def _corner_mask(shape: GridShape) -> sparse.dia_matrix:
    mask = np.ones(shape.array_shape)
    mask[-1, :] = 0.0
    mask[:, -1] = 0.0
    return sparse.diags(mask.ravel())


@lru_cache(maxsize=32)
def grad_matrix(shape: GridShape) -> sparse.csr_matrix:
    return sparse.vstack([_along(shape, k) for k in range(shape.dims)], format="csr")


@lru_cache(maxsize=32)
def sym_grad_matrix(shape: GridShape) -> sparse.csr_matrix:
    if shape.dims == 1:
        return _along(shape, 0, skip=1)

    mask = _corner_mask(shape)
    return sparse.bmat(
        [
            [_along(shape, 0, skip=1), None],
            [None, _along(shape, 1, skip=1)],
            [0.5 * (mask @ _along(shape, 1)), 0.5 * (mask @ _along(shape, 0))],
        ],
        format="csr",
    )


def second_order_matrix(shape: GridShape) -> sparse.csr_matrix:
    return (sym_grad_matrix(shape) @ grad_matrix(shape)).tocsr()


def tensor_weight_vector(shape: GridShape) -> np.ndarray:
    """Flattened inner-product weights of a tensor field (t12 counts twice)."""
    weights = tensor_weights(shape.tensor_channels)
    return np.broadcast_to(weights, (shape.tensor_channels,) + shape.array_shape).ravel().copy()
