"""
Saddle-point forms min_x max_y <K x, y> + G(x) - F*(y) for every model.

Each problem works on raw numpy blocks (lists of arrays) with plain
unweighted sums; the engine multiplies energies by spacing^d when it reports
them. Dual variables live in pointwise balls, so F* is an indicator and the
dual step is a projection.

    TVProblem       x = u        y = p        K = grad
    TGVProblem      x = (u, w)   y = (p, q)   K = (grad u - w, sym_grad w)
    TV2Problem      x = u        y = q        K = sym_grad grad
    L1SymProblem    x = w        y = q        K = sym_grad

Every problem also describes itself as a sum of terms F_i(A_i x) plus an
optional exact quadratic (``splitting``) for the ADMM engine. The terms whose
multipliers are dual blocks come in the order of ``initial_dual``.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import sparse

from src.fields.grid import GridShape, ScalarField, VectorField, pointwise_tensor_norm, pointwise_vec_norm
from src.operators.differential import (
    check_grid,
    div_tensor_array,
    div_vec_array,
    grad_array,
    second_order_adjoint_array,
    second_order_array,
    sym_grad_array,
    tgv_adjoint,
    tgv_forward,
)
from src.operators.matrices import grad_matrix, second_order_matrix, sym_grad_matrix, tensor_weight_vector


Blocks = List[np.ndarray]


def project_vec_ball(p: np.ndarray, radius: float) -> np.ndarray:
    return p / np.maximum(1.0, pointwise_vec_norm(p) / radius)


def project_tensor_ball(q: np.ndarray, radius: float) -> np.ndarray:
    return q / np.maximum(1.0, pointwise_tensor_norm(q) / radius)


def shrink_vec(v: np.ndarray, t: float) -> np.ndarray:
    """argmin_z t sum |z| + 1/2 |z - v|^2 with pointwise Euclidean norms."""
    norms = pointwise_vec_norm(v)
    return v * (np.maximum(norms - t, 0.0) / np.where(norms > 0, norms, 1.0))


def shrink_tensor(v: np.ndarray, t: float) -> np.ndarray:
    norms = pointwise_tensor_norm(v)
    return v * (np.maximum(norms - t, 0.0) / np.where(norms > 0, norms, 1.0))


def _excess(norms: np.ndarray, radius: float) -> bool:
    return bool(np.any(norms > radius * (1.0 + 1e-12)))


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


@dataclass
class SplitTerm:
    """One term F(A x) of a split objective."""

    matrix: sparse.spmatrix
    shape: Tuple[int, ...]  # array shape of A x
    prox: Callable[[np.ndarray, float], np.ndarray]  # (v, t) -> argmin t F(z) + 1/2 |z - v|_W^2
    weights: Optional[np.ndarray] = None  # flattened inner-product weights W, None for plain sums
    dual: bool = True  # multiplier is a dual block of the saddle form


@dataclass
class Splitting:
    """sum_i F_i(A_i x) + 1/2 x^T Q x - b^T x."""

    terms: List[SplitTerm]
    size: int
    quadratic: Optional[sparse.spmatrix] = None
    linear: Optional[np.ndarray] = None


class Fidelity:
    """(1/p) sum |u - f|^p for p in {1, 2}."""

    def __init__(self, f: np.ndarray, p: int):
        if p not in (1, 2):
            raise ValueError(f"Fidelity exponent p must be 1 or 2, got {p}")
        self.f = f
        self.p = p

    def value(self, u: np.ndarray) -> float:
        r = u - self.f
        if self.p == 2:
            return 0.5 * float(np.sum(r * r))
        return float(np.sum(np.abs(r)))

    def prox(self, v: np.ndarray, tau: float) -> np.ndarray:
        if self.p == 2:
            return (v + tau * self.f) / (1.0 + tau)
        r = v - self.f
        return self.f + np.sign(r) * np.maximum(np.abs(r) - tau, 0.0)

    def dual_value(self, kty: np.ndarray) -> Tuple[float, float]:
        """
        -G*(-K^T y) for the given K^T y.

        Returns (value, scale) where scale < 1 means the dual had to be shrunk
        into the domain of G* (p = 1 needs |K^T y| <= 1).
        """
        if self.p == 2:
            r = self.f - kty
            return 0.5 * float(np.sum(self.f * self.f) - np.sum(r * r)), 1.0
        peak = float(np.max(np.abs(kty))) if kty.size else 0.0
        scale = min(1.0, 1.0 / peak) if peak > 0 else 1.0
        return scale * float(np.sum(kty * self.f)), scale

    def split(self, size: int) -> Splitting:
        """Fidelity on the first f.size entries of a primal vector of length ``size``."""
        n = self.f.size
        if self.p == 2:
            mask = np.zeros(size)
            mask[:n] = 1.0
            linear = np.zeros(size)
            linear[:n] = self.f.ravel()
            return Splitting(terms=[], size=size, quadratic=sparse.diags(mask), linear=linear)
        term = SplitTerm(sparse.eye(n, size, format="csr"), self.f.shape, self.prox, dual=False)
        return Splitting(terms=[term], size=size)


class SaddleProblem:
    """Interface used by the primal-dual engine."""

    operator = "tgv"  # name understood by estimate_op_norm

    def __init__(self, shape: GridShape):
        check_grid(shape)
        self.shape = shape
        self.h = shape.spacing
        self.dims = shape.dims

    def initial_primal(self) -> Blocks:
        raise NotImplementedError

    def initial_dual(self) -> Blocks:
        raise NotImplementedError

    def zero_primal(self) -> Blocks:
        return [np.zeros_like(b) for b in self.initial_primal()]

    def forward(self, x: Blocks) -> Blocks:
        raise NotImplementedError

    def adjoint(self, y: Blocks) -> Blocks:
        raise NotImplementedError

    def prox_primal(self, v: Blocks, tau: float) -> Blocks:
        raise NotImplementedError

    def project_dual(self, y: Blocks) -> Blocks:
        raise NotImplementedError

    def dual_infeasible(self, y: Blocks) -> bool:
        raise NotImplementedError

    def energy(self, x: Blocks) -> float:
        raise NotImplementedError

    def dual_energy(self, y: Blocks) -> Tuple[float, bool]:
        """Dual objective at a feasible rescaling of y and whether rescaling was needed."""
        raise NotImplementedError

    def splitting(self) -> Splitting:
        raise NotImplementedError


class TVProblem(SaddleProblem):
    operator = "grad"

    def __init__(self, f: ScalarField, alpha: float, p: int = 2):
        super().__init__(f.shape)
        self.alpha = _check_positive("alpha", alpha)
        self.f = np.array(f.values)
        self.fidelity = Fidelity(self.f, p)

    def initial_primal(self) -> Blocks:
        return [self.f.copy()]

    def initial_dual(self) -> Blocks:
        return [np.zeros((self.dims,) + self.shape.array_shape)]

    def forward(self, x):
        return [grad_array(x[0], self.h, self.dims)]

    def adjoint(self, y):
        return [-div_vec_array(y[0], self.h)]

    def prox_primal(self, v, tau):
        return [self.fidelity.prox(v[0], tau)]

    def project_dual(self, y):
        return [project_vec_ball(y[0], self.alpha)]

    def dual_infeasible(self, y):
        return _excess(pointwise_vec_norm(y[0]), self.alpha)

    def energy(self, x):
        du = grad_array(x[0], self.h, self.dims)
        return self.fidelity.value(x[0]) + self.alpha * float(pointwise_vec_norm(du).sum())

    def dual_energy(self, y):
        projected = self.dual_infeasible(y)
        p = self.project_dual(y)[0]
        value, scale = self.fidelity.dual_value(-div_vec_array(p, self.h))
        return value, projected or scale < 1.0

    def splitting(self):
        split = self.fidelity.split(self.f.size)
        alpha = self.alpha
        split.terms.append(
            SplitTerm(grad_matrix(self.shape), (self.dims,) + self.shape.array_shape, lambda v, t: shrink_vec(v, t * alpha))
        )
        return split


class TGVProblem(SaddleProblem):
    operator = "tgv"

    def __init__(self, f: ScalarField, alpha: float, beta: float, p: int = 2):
        super().__init__(f.shape)
        self.alpha = _check_positive("alpha", alpha)
        self.beta = _check_positive("beta", beta)
        self.f = np.array(f.values)
        self.fidelity = Fidelity(self.f, p)

    def initial_primal(self) -> Blocks:
        return [self.f.copy(), np.zeros((self.dims,) + self.shape.array_shape)]

    def initial_dual(self) -> Blocks:
        return [
            np.zeros((self.dims,) + self.shape.array_shape),
            np.zeros((self.shape.tensor_channels,) + self.shape.array_shape),
        ]

    def forward(self, x):
        return list(tgv_forward(x[0], x[1], self.h))

    def adjoint(self, y):
        return list(tgv_adjoint(y[0], y[1], self.h))

    def prox_primal(self, v, tau):
        return [self.fidelity.prox(v[0], tau), v[1]]

    def project_dual(self, y):
        return [project_vec_ball(y[0], self.alpha), project_tensor_ball(y[1], self.beta)]

    def dual_infeasible(self, y):
        return _excess(pointwise_vec_norm(y[0]), self.alpha) or _excess(pointwise_tensor_norm(y[1]), self.beta)

    def energy(self, x):
        u, w = x
        first = grad_array(u, self.h, self.dims) - w
        second = sym_grad_array(w, self.h)
        return (
            self.fidelity.value(u)
            + self.alpha * float(pointwise_vec_norm(first).sum())
            + self.beta * float(pointwise_tensor_norm(second).sum())
        )

    def dual_energy(self, y):
        projected = self.dual_infeasible(y)
        _, q = self.project_dual(y)
        # The w-block of K^T y must vanish: take p = -div q, shrunk into the alpha-ball.
        p = -div_tensor_array(q, self.h)
        peak = float(pointwise_vec_norm(p).max())
        shrink = min(1.0, self.alpha / peak) if peak > 0 else 1.0
        value, scale = self.fidelity.dual_value(-div_vec_array(shrink * p, self.h))
        return value, projected or shrink < 1.0 or scale < 1.0

    def splitting(self):
        n, d = self.f.size, self.dims
        channels = self.shape.tensor_channels
        split = self.fidelity.split(n * (1 + d))
        alpha, beta = self.alpha, self.beta
        first = sparse.hstack([grad_matrix(self.shape), -sparse.identity(d * n)], format="csr")
        second = sparse.hstack([sparse.csr_matrix((channels * n, n)), sym_grad_matrix(self.shape)], format="csr")
        split.terms.append(SplitTerm(first, (d,) + self.shape.array_shape, lambda v, t: shrink_vec(v, t * alpha)))
        split.terms.append(
            SplitTerm(
                second,
                (channels,) + self.shape.array_shape,
                lambda v, t: shrink_tensor(v, t * beta),
                weights=tensor_weight_vector(self.shape),
            )
        )
        return split


class TV2Problem(SaddleProblem):
    operator = "tv2"

    def __init__(self, f: ScalarField, beta: float, p: int = 2):
        super().__init__(f.shape)
        self.beta = _check_positive("beta", beta)
        self.f = np.array(f.values)
        self.fidelity = Fidelity(self.f, p)

    def initial_primal(self) -> Blocks:
        return [self.f.copy()]

    def initial_dual(self) -> Blocks:
        return [np.zeros((self.shape.tensor_channels,) + self.shape.array_shape)]

    def forward(self, x):
        return [second_order_array(x[0], self.h, self.dims)]

    def adjoint(self, y):
        return [second_order_adjoint_array(y[0], self.h)]

    def prox_primal(self, v, tau):
        return [self.fidelity.prox(v[0], tau)]

    def project_dual(self, y):
        return [project_tensor_ball(y[0], self.beta)]

    def dual_infeasible(self, y):
        return _excess(pointwise_tensor_norm(y[0]), self.beta)

    def energy(self, x):
        d2u = second_order_array(x[0], self.h, self.dims)
        return self.fidelity.value(x[0]) + self.beta * float(pointwise_tensor_norm(d2u).sum())

    def dual_energy(self, y):
        projected = self.dual_infeasible(y)
        q = self.project_dual(y)[0]
        value, scale = self.fidelity.dual_value(second_order_adjoint_array(q, self.h))
        return value, projected or scale < 1.0

    def splitting(self):
        split = self.fidelity.split(self.f.size)
        beta = self.beta
        split.terms.append(
            SplitTerm(
                second_order_matrix(self.shape),
                (self.shape.tensor_channels,) + self.shape.array_shape,
                lambda v, t: shrink_tensor(v, t * beta),
                weights=tensor_weight_vector(self.shape),
            )
        )
        return split


class L1SymProblem(SaddleProblem):
    """sum |g - w| + lambda sum |sym_grad w| over vector fields w."""

    operator = "sym_grad"

    def __init__(self, g: VectorField, lam: float):
        super().__init__(g.shape)
        self.lam = _check_positive("lambda", lam)
        self.g = np.array(g.values)

    def initial_primal(self) -> Blocks:
        return [self.g.copy()]

    def initial_dual(self) -> Blocks:
        return [np.zeros((self.shape.tensor_channels,) + self.shape.array_shape)]

    def forward(self, x):
        return [sym_grad_array(x[0], self.h)]

    def adjoint(self, y):
        return [-div_tensor_array(y[0], self.h)]

    def prox_primal(self, v, tau):
        return [self.g + shrink_vec(v[0] - self.g, tau)]

    def project_dual(self, y):
        return [project_tensor_ball(y[0], self.lam)]

    def dual_infeasible(self, y):
        return _excess(pointwise_tensor_norm(y[0]), self.lam)

    def energy(self, x):
        w = x[0]
        return float(pointwise_vec_norm(self.g - w).sum()) + self.lam * float(
            pointwise_tensor_norm(sym_grad_array(w, self.h)).sum()
        )

    def dual_energy(self, y):
        projected = self.dual_infeasible(y)
        q = self.project_dual(y)[0]
        kty = -div_tensor_array(q, self.h)
        peak = float(pointwise_vec_norm(kty).max())
        scale = min(1.0, 1.0 / peak) if peak > 0 else 1.0
        return scale * float(np.sum(kty * self.g)), projected or scale < 1.0

    def splitting(self):
        g, lam = self.g, self.lam
        size = g.size
        fit = SplitTerm(sparse.identity(size, format="csr"), g.shape, lambda v, t: g + shrink_vec(v - g, t), dual=False)
        regulariser = SplitTerm(
            sym_grad_matrix(self.shape),
            (self.shape.tensor_channels,) + self.shape.array_shape,
            lambda v, t: shrink_tensor(v, t * lam),
            weights=tensor_weight_vector(self.shape),
        )
        return Splitting(terms=[fit, regulariser], size=size)
