from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import pandas as pd

from src.fields.grid import ScalarField, SymTensorField, VectorField
from src.operators.differential import grad
from src.solvers.primal_dual import (
    GapReport,
    PrimalDualOutcome,
    SaddleState,
    SolverConfig,
    checkpoint_frame,
    gap_report,
    run_primal_dual,
)
from src.solvers.problems import L1SymProblem, TGVProblem, TV2Problem, TVProblem


@dataclass
class SolveResult:
    u: Optional[ScalarField]
    w: Optional[VectorField]
    p: Optional[VectorField]
    q: Optional[SymTensorField]
    objective: float
    iterations: int
    converged: bool
    metric_history: List[float] = field(default_factory=list)
    energy_history: List[float] = field(default_factory=list)
    checkpoints: List[Tuple[int, float, float]] = field(default_factory=list)
    tau: float = 0.0
    sigma: float = 0.0
    state: Optional[SaddleState] = None

    def gap(self) -> GapReport:
        return gap_report(self.state)

    def history_frame(self) -> pd.DataFrame:
        return checkpoint_frame(self.checkpoints)

    def summary(self) -> dict:
        return {
            "energy": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _config(cfg: Optional[SolverConfig]) -> SolverConfig:
    return cfg if cfg is not None else SolverConfig.from_defaults()


def _result(outcome: PrimalDualOutcome, **fields_) -> SolveResult:
    return SolveResult(
        objective=outcome.energy,
        iterations=outcome.iterations,
        converged=outcome.converged,
        metric_history=[m for _, _, m in outcome.checkpoints],
        energy_history=[e for _, e, _ in outcome.checkpoints],
        checkpoints=outcome.checkpoints,
        tau=outcome.tau,
        sigma=outcome.sigma,
        state=outcome.state,
        **fields_,
    )


def solve_tv(f: ScalarField, alpha: float, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """min_u (1/p)||f - u||_p^p + alpha ||Du||."""
    cfg = _config(cfg)
    outcome = run_primal_dual(TVProblem(f, alpha, cfg.p), cfg)
    (u,), (p,) = outcome.state.primal, outcome.state.dual
    return _result(outcome, u=ScalarField(f.shape, u), w=None, p=VectorField(f.shape, p), q=None)


def solve_tgv2(f: ScalarField, alpha: float, beta: float, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """min_{u,w} (1/p)||f - u||_p^p + alpha ||Du - w|| + beta ||E w||."""
    cfg = _config(cfg)
    outcome = run_primal_dual(TGVProblem(f, alpha, beta, cfg.p), cfg)
    u, w = outcome.state.primal
    p, q = outcome.state.dual
    return _result(
        outcome,
        u=ScalarField(f.shape, u),
        w=VectorField(f.shape, w),
        p=VectorField(f.shape, p),
        q=SymTensorField(f.shape, q),
    )


def solve_tv2_1d(f: ScalarField, beta: float, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """min_u (1/p)||f - u||_p^p + beta ||D^2 u|| on a 1-D grid."""
    if f.shape.dims != 1:
        raise ValueError(f"solve_tv2_1d needs a 1-D signal, got a {f.shape.dims}-D field")
    cfg = _config(cfg)
    outcome = run_primal_dual(TV2Problem(f, beta, cfg.p), cfg)
    (u,), (q,) = outcome.state.primal, outcome.state.dual
    return _result(outcome, u=ScalarField(f.shape, u), w=None, p=None, q=SymTensorField(f.shape, q))


def solve_l1_sym(g: VectorField, lam: float, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """min_w ||g - w||_1 + lam ||E w||."""
    cfg = _config(cfg)
    outcome = run_primal_dual(L1SymProblem(g, lam), cfg)
    (w,), (q,) = outcome.state.primal, outcome.state.dual
    return _result(outcome, u=None, w=VectorField(g.shape, w), p=None, q=SymTensorField(g.shape, q))


def eval_tgv_result(u: ScalarField, alpha: float, beta: float,
                    cfg: Optional[SolverConfig] = None) -> Tuple[float, SolveResult]:
    """
    TGV value of a fixed u: min_w alpha ||Du - w|| + beta ||E w||.

    Solved as the L1 problem on g = Du with lambda = beta / alpha.

    Returns:
        (value, the underlying SolveResult carrying w and convergence info)
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"alpha and beta must be positive, got alpha={alpha}, beta={beta}")
    result = solve_l1_sym(grad(u), beta / alpha, cfg)
    return alpha * result.objective, result


def eval_tgv(u: ScalarField, alpha: float, beta: float,
             cfg: Optional[SolverConfig] = None) -> Tuple[float, VectorField]:
    value, result = eval_tgv_result(u, alpha, beta, cfg)
    return value, result.w


# ============================================================
# ENERGIES (spacing^d weighted)
# ============================================================

def tv_energy(f: ScalarField, u: ScalarField, alpha: float, p: int = 2) -> float:
    return f.shape.cell_volume * TVProblem(f, alpha, p).energy([u.values])


def tgv2_energy(f: ScalarField, u: ScalarField, w: VectorField, alpha: float, beta: float, p: int = 2) -> float:
    return f.shape.cell_volume * TGVProblem(f, alpha, beta, p).energy([u.values, w.values])


def tv2_energy(f: ScalarField, u: ScalarField, beta: float, p: int = 2) -> float:
    return f.shape.cell_volume * TV2Problem(f, beta, p).energy([u.values])


def l1_sym_energy(g: VectorField, w: VectorField, lam: float) -> float:
    return g.shape.cell_volume * L1SymProblem(g, lam).energy([w.values])
