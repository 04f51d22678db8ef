"""
Primal-dual engines for the saddle problems in src.solvers.problems.

``admm`` (default) alternates an exact linear step with pointwise proxes on
the split terms F_i(A_i x):

    x <- (Q + sum rho_i A_i^T W_i A_i)^-1 (b + sum rho_i A_i^T W_i (z_i - l_i))
    z_i <- prox_{F_i / rho_i}(A_i x + l_i)
    l_i <- l_i + A_i x - z_i

The scaled multipliers give the dual blocks y_i = rho_i l_i. Penalties are
rebalanced per term against the primal and dual residuals during the first
half of the run; the linear system is refactorised when they change.

``pdhg`` is the first-order iteration with extrapolation parameter 1:

    y <- proj(y + sigma K x_bar)
    x <- prox_G(x - tau K^T y)
    x_bar <- 2 x_new - x_old

Convergence is checked every ``check_every`` iterations with either the
relative primal change since the previous checkpoint (ADMM also requires a
small constraint residual) or the duality gap relative to the primal energy.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import factorized

from src.config.settings import Config
from src.operators.norm_estimate import step_norm
from src.solvers.problems import Blocks, SaddleProblem, Splitting


METRICS = ("relative-iterate-change", "primal-dual-gap")
METHODS = ("admm", "pdhg")


@dataclass
class SolverConfig:
    tau: Optional[float] = None
    sigma: Optional[float] = None
    max_iter: int = Config.SOLVER_MAX_ITER
    tol: float = Config.SOLVER_TOL
    metric: str = Config.SOLVER_METRIC
    p: int = 2
    check_every: int = Config.CHECK_EVERY
    verbose: bool = False
    log_path: Optional[str] = None
    method: str = Config.SOLVER_METHOD

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got '{self.metric}'")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got '{self.method}'")
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if not (self.tol >= 0):
            raise ValueError(f"tol must be nonnegative, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if int(self.check_every) < 1:
            raise ValueError(f"check_every must be at least 1, got {self.check_every}")
        for name in ("tau", "sigma"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if self.method == "admm" and (self.tau is not None or self.sigma is not None):
            raise ValueError("tau and sigma are step sizes of method 'pdhg'")
        self.max_iter = int(self.max_iter)
        self.check_every = int(self.check_every)

    @classmethod
    def from_defaults(cls, **overrides) -> "SolverConfig":
        settings = Config.solver_defaults()
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**settings)

    def with_overrides(self, **overrides) -> "SolverConfig":
        settings = dict(self.__dict__)
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(**settings)


@dataclass
class SaddleState:
    problem: SaddleProblem
    primal: Blocks
    dual: Blocks

    @classmethod
    def initial(cls, problem: SaddleProblem) -> "SaddleState":
        return cls(problem, problem.initial_primal(), problem.initial_dual())

    @classmethod
    def zeros(cls, problem: SaddleProblem) -> "SaddleState":
        return cls(problem, problem.zero_primal(), [np.zeros_like(b) for b in problem.initial_dual()])


@dataclass(frozen=True)
class GapReport:
    value: float  # spacing^d-weighted, clamped at 0
    primal: float
    dual: float
    projected: bool  # dual had to be projected or rescaled to be feasible


@dataclass
class PrimalDualOutcome:
    state: SaddleState
    energy: float
    iterations: int
    converged: bool
    tau: float  # 0 for admm
    sigma: float
    checkpoints: List[Tuple[int, float, float]] = field(default_factory=list)
    penalties: Tuple[float, ...] = ()  # final rho per split term, admm only
    method: str = "admm"


def _norm(blocks: Blocks) -> float:
    return float(np.sqrt(sum(np.sum(b * b) for b in blocks)))


def gap_report(state: SaddleState) -> GapReport:
    """Primal energy minus dual objective at a feasible rescaling of the dual."""
    problem = state.problem
    cell = problem.shape.cell_volume
    primal = problem.energy(state.primal)
    dual, projected = problem.dual_energy(state.dual)
    return GapReport(
        value=cell * max(primal - dual, 0.0),
        primal=cell * primal,
        dual=cell * dual,
        projected=projected,
    )


def duality_gap(state: SaddleState) -> float:
    return gap_report(state).value


def step_sizes(problem: SaddleProblem, cfg: SolverConfig) -> Tuple[float, float]:
    """tau, sigma with tau * sigma * ||K||^2 = STEP_PRODUCT unless given explicitly."""
    norm = step_norm(problem.shape, problem.operator)
    if cfg.tau is not None and cfg.sigma is not None:
        if cfg.tau * cfg.sigma * norm ** 2 >= 1.0:
            raise ValueError(
                f"Step sizes too large: tau*sigma*||K||^2 = {cfg.tau * cfg.sigma * norm ** 2:.4f} >= 1"
            )
        return cfg.tau, cfg.sigma

    product = Config.STEP_PRODUCT / norm ** 2
    if cfg.tau is not None:
        return cfg.tau, product / cfg.tau
    if cfg.sigma is not None:
        return product / cfg.sigma, cfg.sigma
    step = np.sqrt(product)
    return step, step


def run_primal_dual(problem: SaddleProblem, cfg: SolverConfig, state: Optional[SaddleState] = None) -> PrimalDualOutcome:
    state = state or SaddleState.initial(problem)
    started = time.time()
    run = _run_pdhg if cfg.method == "pdhg" else _run_admm
    outcome = run(problem, cfg, state)

    if cfg.verbose:
        marker = "✅" if outcome.converged else "⚠️"
        print(f"{marker} {type(problem).__name__} ({outcome.method}): {outcome.iterations} iterations, "
              f"energy={outcome.energy:.10e}, converged={outcome.converged} ({time.time() - started:.1f}s)")
    if cfg.log_path:
        checkpoint_frame(outcome.checkpoints).to_csv(cfg.log_path, index=False, float_format="%.17g")
    return outcome


def _checkpoint_due(iteration: int, cfg: SolverConfig) -> bool:
    return iteration % cfg.check_every == 0 or iteration >= cfg.max_iter


def _report(cfg: SolverConfig, iteration: int, energy: float, metric: float) -> None:
    if cfg.verbose and iteration % (100 * cfg.check_every) == 0:
        print(f"   [{iteration}] energy={energy:.10e} metric={metric:.3e}")


# ============================================================
# PDHG
# ============================================================

def _run_pdhg(problem: SaddleProblem, cfg: SolverConfig, state: SaddleState) -> PrimalDualOutcome:
    tau, sigma = step_sizes(problem, cfg)
    x = [b.copy() for b in state.primal]
    y = [b.copy() for b in state.dual]
    x_bar = [b.copy() for b in x]
    snapshot = [b.copy() for b in x]
    tiny = np.finfo(float).tiny
    cell = problem.shape.cell_volume

    checkpoints: List[Tuple[int, float, float]] = []
    converged = False
    iteration = 0
    if cfg.verbose:
        print(f"🚀 {type(problem).__name__}: tau={tau:.3e}, sigma={sigma:.3e}, max_iter={cfg.max_iter}")

    while iteration < cfg.max_iter:
        iteration += 1
        kx = problem.forward(x_bar)
        y = problem.project_dual([b + sigma * k for b, k in zip(y, kx)])
        kty = problem.adjoint(y)
        x_new = problem.prox_primal([b - tau * k for b, k in zip(x, kty)], tau)
        x_bar = [2.0 * n - o for n, o in zip(x_new, x)]
        x = x_new

        if not _checkpoint_due(iteration, cfg):
            continue

        energy = problem.energy(x)
        if cfg.metric == "primal-dual-gap":
            dual, _ = problem.dual_energy(y)
            metric = max(energy - dual, 0.0) / max(abs(energy), tiny)
        else:
            change = _norm([a - b for a, b in zip(x, snapshot)])
            metric = change / max(_norm(x), tiny)
            snapshot = [b.copy() for b in x]
        checkpoints.append((iteration, cell * energy, metric))
        _report(cfg, iteration, cell * energy, metric)
        if metric <= cfg.tol:
            converged = True
            break

    return PrimalDualOutcome(
        state=SaddleState(problem, x, y),
        energy=cell * problem.energy(x),
        iterations=iteration,
        converged=converged,
        tau=tau,
        sigma=sigma,
        checkpoints=checkpoints,
        method="pdhg",
    )


# ============================================================
# ADMM
# ============================================================

def _pack(blocks: Blocks) -> np.ndarray:
    return np.concatenate([b.ravel() for b in blocks])


def _unpack(x: np.ndarray, like: Blocks) -> Blocks:
    blocks, start = [], 0
    for b in like:
        blocks.append(x[start:start + b.size].reshape(b.shape))
        start += b.size
    return blocks


def _weight(term) -> Union[float, np.ndarray]:
    return 1.0 if term.weights is None else term.weights


def initial_penalty(matrix: sparse.spmatrix) -> float:
    """1 / ||A||^2, bounded above by the product of the 1- and inf-norms."""
    bound = float(abs(matrix).sum(axis=0).max() * abs(matrix).sum(axis=1).max()) if matrix.nnz else 0.0
    return 1.0 / bound if bound > 0 else 1.0


def _factorise(split: Splitting, rho: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    system = sparse.csc_matrix((split.size, split.size))
    if split.quadratic is not None:
        system = system + split.quadratic
    for term, r in zip(split.terms, rho):
        system = system + r * (term.matrix.T @ sparse.diags(np.broadcast_to(_weight(term), term.matrix.shape[0])) @ term.matrix)
    return factorized(sparse.csc_matrix(system))


def _wnorm(v: np.ndarray, weights) -> float:
    return float(np.sqrt(np.sum(weights * v * v)))


def _run_admm(problem: SaddleProblem, cfg: SolverConfig, state: SaddleState) -> PrimalDualOutcome:
    split = problem.splitting()
    terms = split.terms
    linear = split.linear if split.linear is not None else np.zeros(split.size)
    tiny = np.finfo(float).tiny
    cell = problem.shape.cell_volume

    rho = np.array([initial_penalty(t.matrix) for t in terms])
    floor, ceiling = rho / Config.PENALTY_RANGE, rho * Config.PENALTY_RANGE
    x = _pack(state.primal)
    z = [t.matrix @ x for t in terms]
    duals = iter(state.dual)
    lam = [next(duals).ravel() / r if t.dual else np.zeros_like(zi) for t, r, zi in zip(terms, rho, z)]
    solve = _factorise(split, rho)

    def dual_blocks() -> Blocks:
        return [(r * l).reshape(t.shape) for t, r, l in zip(terms, rho, lam) if t.dual]

    snapshot = x.copy()
    scale = 1.0 / problem.h
    adapt_until = cfg.max_iter // 2
    checkpoints: List[Tuple[int, float, float]] = []
    converged = False
    iteration = 0
    if cfg.verbose:
        print(f"🚀 {type(problem).__name__}: admm, rho={', '.join(f'{r:.3e}' for r in rho)}, max_iter={cfg.max_iter}")

    while iteration < cfg.max_iter:
        iteration += 1
        rhs = linear.copy()
        for t, r, zi, li in zip(terms, rho, z, lam):
            rhs += r * (t.matrix.T @ (_weight(t) * (zi - li)))
        x = solve(rhs)

        previous = z
        ax = [t.matrix @ x for t in terms]
        z = []
        for i, t in enumerate(terms):
            v = ax[i] + lam[i]
            z.append(t.prox(v.reshape(t.shape), 1.0 / rho[i]).ravel())
            lam[i] = v - z[i]

        if not _checkpoint_due(iteration, cfg):
            continue

        blocks = _unpack(x, state.primal)
        energy = problem.energy(blocks)
        primal_res = [_wnorm(a - zi, _weight(t)) for t, a, zi in zip(terms, ax, z)]
        if cfg.metric == "primal-dual-gap":
            dual, _ = problem.dual_energy(dual_blocks())
            metric = max(energy - dual, 0.0) / max(abs(energy), tiny)
        else:
            reach = max(
                np.sqrt(sum(_wnorm(a, _weight(t)) ** 2 for t, a in zip(terms, ax))),
                np.sqrt(sum(_wnorm(zi, _weight(t)) ** 2 for t, zi in zip(terms, z))),
                scale * float(np.linalg.norm(x)),
                tiny,
            )
            change = float(np.linalg.norm(x - snapshot)) / max(float(np.linalg.norm(x)), tiny)
            metric = max(change, float(np.sqrt(np.sum(np.square(primal_res)))) / reach)
            snapshot = x.copy()
        checkpoints.append((iteration, cell * energy, metric))
        _report(cfg, iteration, cell * energy, metric)
        if metric <= cfg.tol:
            converged = True
            break

        if iteration <= adapt_until and _rebalance(terms, rho, lam, ax, z, previous, primal_res, floor, ceiling):
            solve = _factorise(split, rho)

    return PrimalDualOutcome(
        state=SaddleState(problem, _unpack(x, state.primal), dual_blocks()),
        energy=cell * problem.energy(_unpack(x, state.primal)),
        iterations=iteration,
        converged=converged,
        tau=0.0,
        sigma=0.0,
        checkpoints=checkpoints,
        penalties=tuple(float(r) for r in rho),
        method="admm",
    )


def _rebalance(terms, rho, lam, ax, z, previous, primal_res, floor, ceiling) -> bool:
    """Residual balancing per term; rescales the multipliers with rho. True if any rho moved."""
    tiny = np.finfo(float).tiny
    moved = False
    for i, t in enumerate(terms):
        weights = _weight(t)
        r_rel = primal_res[i] / max(_wnorm(ax[i], weights), _wnorm(z[i], weights), tiny)
        s = rho[i] * float(np.linalg.norm(t.matrix.T @ (weights * (z[i] - previous[i]))))
        s_rel = s / max(rho[i] * float(np.linalg.norm(t.matrix.T @ (weights * lam[i]))), tiny)
        if r_rel > Config.PENALTY_BALANCE * s_rel:
            factor = Config.PENALTY_FACTOR
        elif s_rel > Config.PENALTY_BALANCE * r_rel:
            factor = 1.0 / Config.PENALTY_FACTOR
        else:
            continue
        updated = float(np.clip(rho[i] * factor, floor[i], ceiling[i]))
        if updated == rho[i]:
            continue
        lam[i] *= rho[i] / updated
        rho[i] = updated
        moved = True
    return moved


def checkpoint_frame(checkpoints: List[Tuple[int, float, float]]) -> pd.DataFrame:
    return pd.DataFrame(checkpoints, columns=["iteration", "energy", "metric"])
