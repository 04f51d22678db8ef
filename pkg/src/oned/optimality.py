"""
One-dimensional optimality certificates for L2-TGV and the jump threshold in beta.

For a 1-D minimiser (u, w) there is a dual v with

    v'' = f - u
    -v' in alpha Sgn(Du - w)
    v in beta Sgn(E w)

and v(a) = v(b) = v'(a) = v'(b) = 0. build_dual integrates f - u twice from
the left end, so the left conditions hold by construction and the right ones
are reported as residuals. Below a threshold beta* the minimiser has no jump
part (Du = w) and u solves the second-order TV problem.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.config.settings import Config
from src.fields.grid import ScalarField
from src.harness.report import ExperimentReport
from src.operators.differential import grad_array, sym_grad_array
from src.solvers.denoise import SolveResult, solve_tgv2, solve_tv2_1d
from src.solvers.primal_dual import SolverConfig
from src.utils.metrics import relative_l2


@dataclass(frozen=True)
class OptimalityReport:
    v: ScalarField
    boundary_residual: Tuple[float, float, float, float]  # |v(a)|, |v(b)|, |v'(a)|, |v'(b)|
    curvature_residual: float
    jump_violation: float
    bend_violation: float
    passed: bool


def _require_1d(*fields: ScalarField) -> None:
    for f in fields:
        if f.shape.dims != 1:
            raise ValueError("1-D signals required")
    if len({f.shape.n1 for f in fields}) != 1:
        raise ValueError("Signals must have the same length")


def _integrate(f: ScalarField, u: ScalarField) -> Tuple[np.ndarray, np.ndarray]:
    h = f.shape.spacing
    vprime = h * np.cumsum(f.signal - u.signal)
    return vprime, h * np.cumsum(vprime)


def build_dual(f: ScalarField, u: ScalarField) -> ScalarField:
    """Dual v with discrete v'' = f - u and v = v' = 0 just left of the first sample."""
    _require_1d(f, u)
    _, v = _integrate(f, u)
    return ScalarField.from_array(v, spacing=f.shape.spacing)


def second_difference_padded(v: ScalarField) -> np.ndarray:
    """(v[i] - 2 v[i-1] + v[i-2]) / h^2 with zeros before the first sample."""
    padded = np.concatenate([[0.0, 0.0], v.signal])
    return (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / v.shape.spacing ** 2


def boundary_residuals(f: ScalarField, u: ScalarField) -> Tuple[float, float, float, float]:
    _require_1d(f, u)
    vprime, v = _integrate(f, u)
    return 0.0, float(max(abs(v[-2]), abs(v[-1]))), 0.0, float(abs(vprime[-1]))


def check_sgn_inclusion(measure_vals: Sequence[float], dual_vals: Sequence[float], bound: float,
                        tol: float = Config.DETECT_TOL) -> float:
    """
    How far dual is from bound * Sgn(measure).

    Returns the larger of the ball excess max(|dual| - bound) and the
    alignment error |dual - bound * sign(measure)| where |measure| > tol.
    """
    measure = np.asarray(measure_vals, dtype=float).ravel()
    dual = np.asarray(dual_vals, dtype=float).ravel()
    if measure.shape != dual.shape:
        raise ValueError(f"Sequences not aligned: {measure.shape} vs {dual.shape}")
    if not bound > 0:
        raise ValueError(f"bound must be positive, got {bound}")
    if measure.size == 0:
        return 0.0

    excess = float(np.max(np.maximum(np.abs(dual) - bound, 0.0)))
    active = np.abs(measure) > tol
    alignment = 0.0
    if np.any(active):
        alignment = float(np.max(np.abs(dual[active] - bound * np.sign(measure[active]))))
    return max(excess, alignment)


def certify_optimality(f: ScalarField, result: SolveResult, alpha: float, beta: float,
                       tol: float = 1e-3, measure_tol: Optional[float] = None) -> OptimalityReport:
    """
    Check the three dual conditions and the boundary conditions for a 1-D TGV solution.

    Violations are compared with tol * alpha (for v' and the jump part) and
    tol * beta (for v and the bend part).
    """
    if result.u is None or result.w is None:
        raise ValueError("certify_optimality needs a solve_tgv2 result")
    _require_1d(f, result.u)
    measure_tol = Config.DETECT_TOL if measure_tol is None else measure_tol
    h = f.shape.spacing

    v = build_dual(f, result.u)
    vprime, _ = _integrate(f, result.u)
    residual = f.signal - result.u.signal
    curvature = float(np.max(np.abs(second_difference_padded(v) - residual)))

    jump = (grad_array(result.u.values, h, 1) - result.w.values)[0, :, 0]
    bend = sym_grad_array(result.w.values, h)[0, :, 0]
    jump_violation = check_sgn_inclusion(jump, -vprime, alpha, measure_tol)
    bend_violation = check_sgn_inclusion(bend, v.signal, beta, measure_tol)
    boundary = boundary_residuals(f, result.u)

    scale_f = max(float(np.max(np.abs(residual))), 1.0)
    passed = (
        curvature <= 1e-10 * scale_f
        and boundary[3] <= tol * alpha
        and boundary[1] <= tol * beta
        and jump_violation <= tol * alpha
        and bend_violation <= tol * beta
    )
    return OptimalityReport(v, boundary, curvature, jump_violation, bend_violation, bool(passed))


# ============================================================
# THRESHOLD beta*
# ============================================================

def _evaluate_beta(f: ScalarField, alpha: float, beta: float, cfg: SolverConfig, detect_tol: float):
    tgv = solve_tgv2(f, alpha, beta, cfg)
    jump = grad_array(tgv.u.values, f.shape.spacing, 1) - tgv.w.values
    max_jump = float(np.max(np.abs(jump)))
    tv2 = solve_tv2_1d(f, beta, cfg)
    params = {"beta": beta, "alpha": alpha}
    metrics = {
        "max_abs_Du_minus_w": max_jump,
        "dist_to_tv2": relative_l2(tv2.u, tgv.u),
        "qualifies": float(max_jump <= detect_tol),
        "converged": float(tgv.converged and tv2.converged),
    }
    return params, metrics


def beta_sweep(f: ScalarField, alpha: float, betas: Sequence[float], cfg: Optional[SolverConfig] = None,
               detect_tol: float = Config.DETECT_TOL, progress: bool = False) -> ExperimentReport:
    """Jump indicator and distance to the second-order TV solution on a fixed beta grid."""
    _require_1d(f)
    cfg = cfg or SolverConfig.from_defaults()
    report = ExperimentReport("beta-sweep", sweep_key="beta")
    for beta in tqdm(sorted(betas), desc="beta sweep", disable=not progress):
        try:
            params, metrics = _evaluate_beta(f, alpha, float(beta), cfg, detect_tol)
            report.add_row(params, metrics)
        except Exception as e:
            report.add_error({"beta": float(beta), "alpha": alpha}, str(e))
    return report.sort()


def find_beta_star(f: ScalarField, alpha: float, cfg: Optional[SolverConfig] = None,
                   bracket: Optional[Tuple[float, float]] = None, steps: Optional[int] = None,
                   detect_tol: float = Config.DETECT_TOL, rel_width: float = 1e-3,
                   progress: bool = False) -> Tuple[float, ExperimentReport]:
    """
    Geometric bisection for the largest beta at which the TGV solution has no jump part.

    The returned beta_star is the largest tested beta that still qualifies
    (max|Du - w| <= detect_tol). NaN is returned, with summary
    ``switch_found = False``, when the indicator does not change over the
    bracket.
    """
    _require_1d(f)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    cfg = cfg or SolverConfig.from_defaults()
    lo, hi = bracket or Config.BETA_BRACKET
    steps = Config.BISECTION_STEPS if steps is None else steps
    if not 0 < lo < hi:
        raise ValueError(f"Invalid beta bracket ({lo}, {hi})")

    report = ExperimentReport("beta-star", sweep_key="beta")
    report.stamp(n=f.shape.n1, alpha=alpha, detect_tol=detect_tol, tol=cfg.tol, max_iter=cfg.max_iter,
                 bracket=[lo, hi])

    def qualifies(beta: float) -> bool:
        params, metrics = _evaluate_beta(f, alpha, beta, cfg, detect_tol)
        report.add_row(params, metrics)
        return metrics["qualifies"] > 0

    low_ok, high_ok = qualifies(lo), qualifies(hi)
    if high_ok or not low_ok:
        report.summary = {"beta_star": math.nan, "switch_found": False, "all_qualify": high_ok}
        report.passed = False
        return math.nan, report.sort()

    with tqdm(total=steps, desc="beta* bisection", disable=not progress) as bar:
        for _ in range(steps):
            if hi / lo <= 1.0 + rel_width:
                break
            mid = math.sqrt(lo * hi)
            if qualifies(mid):
                lo = mid
            else:
                hi = mid
            bar.update(1)

    report.summary = {"beta_star": lo, "beta_upper": hi, "switch_found": True}
    report.passed = True
    return lo, report.sort()
