"""
Tests for the 1-D dual certificate and the beta threshold search.
"""
import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import numpy as np
import pytest

from src.fields.grid import ScalarField
from src.harness.generators import gen_step
from src.oned.optimality import (
    beta_sweep,
    boundary_residuals,
    build_dual,
    certify_optimality,
    check_sgn_inclusion,
    find_beta_star,
    second_difference_padded,
)
from src.solvers.denoise import solve_tgv2, solve_tv
from src.solvers.primal_dual import SolverConfig


FAST = SolverConfig(max_iter=300, tol=1e-6)


def test_build_dual_second_difference(rng):
    print("🧪 Testing dual construction...")
    f = ScalarField.from_array(rng.standard_normal(20), spacing=0.5)
    u = ScalarField.from_array(rng.standard_normal(20), spacing=0.5)
    v = build_dual(f, u)
    assert np.allclose(second_difference_padded(v), f.signal - u.signal, atol=1e-12)
    print("✅ v'' = f - u")


def test_boundary_residuals_vanish_for_equal_signals():
    f = gen_step(10)
    assert boundary_residuals(f, f) == (0.0, 0.0, 0.0, 0.0)


def test_boundary_residuals_see_mass_difference():
    f = ScalarField.from_array(np.ones(5))
    u = ScalarField.from_array(np.zeros(5))
    _, v_end, _, vprime_end = boundary_residuals(f, u)
    assert vprime_end == pytest.approx(5.0)
    assert v_end == pytest.approx(15.0)


def test_check_sgn_inclusion():
    measure = [1.0, 0.0, -2.0]
    assert check_sgn_inclusion(measure, [0.5, 0.1, -0.5], 0.5) == 0.0
    assert check_sgn_inclusion(measure, [0.4, 0.1, -0.5], 0.5) == pytest.approx(0.1)
    assert check_sgn_inclusion(measure, [0.5, 0.7, -0.5], 0.5) == pytest.approx(0.2)
    assert check_sgn_inclusion([], [], 1.0) == 0.0

    with pytest.raises(ValueError):
        check_sgn_inclusion([1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        check_sgn_inclusion([1.0], [1.0], 0.0)


def test_one_dimensional_inputs_required():
    image = ScalarField.from_array(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        build_dual(image, image)
    with pytest.raises(ValueError):
        build_dual(gen_step(8), gen_step(10))
    with pytest.raises(ValueError):
        find_beta_star(image, 0.1)


def test_certify_needs_tgv_result():
    f = gen_step(12)
    with pytest.raises(ValueError):
        certify_optimality(f, solve_tv(f, 0.1, FAST), 0.1, 0.1)


def test_certificate_of_converged_solution():
    print("🧪 Testing the optimality certificate...")
    f = ScalarField.from_array(gen_step(32).signal + 0.2 * np.sin(np.linspace(0.0, 3.0, 32)))
    result = solve_tgv2(f, 0.1, 0.5, SolverConfig(max_iter=100000, tol=1e-9, metric="primal-dual-gap"))
    report = certify_optimality(f, result, 0.1, 0.5, tol=1e-3)
    assert report.curvature_residual <= 1e-10
    assert report.boundary_residual[3] <= 1e-2
    assert report.boundary_residual[1] <= 1e-2
    assert report.v.shape.n1 == 32
    print(f"✅ certificate passed={report.passed}")


def test_beta_sweep_rows_sorted():
    f = gen_step(16)
    report = beta_sweep(f, 0.1, [1e-1, 1e-3, 1e-2], FAST)
    assert [row["beta"] for row in report.rows] == [1e-3, 1e-2, 1e-1]
    assert {"max_abs_Du_minus_w", "dist_to_tv2", "qualifies"} <= set(report.rows[0])


def test_find_beta_star_without_switch():
    f = ScalarField.from_array(np.zeros(16))
    beta_star, report = find_beta_star(f, 0.1, FAST, bracket=(1e-3, 1e-1))
    # zero data: every beta qualifies
    assert math.isnan(beta_star)
    assert report.summary["switch_found"] is False
    assert report.summary["all_qualify"] is True
    assert report.verdict() == "fail"


def test_find_beta_star_rejects_bad_bracket():
    with pytest.raises(ValueError):
        find_beta_star(gen_step(16), 0.1, FAST, bracket=(1.0, 0.1))
    with pytest.raises(ValueError):
        find_beta_star(gen_step(16), 0.0, FAST)


def test_find_beta_star_brackets_switch():
    print("🧪 Testing beta* bisection on a step...")
    f = gen_step(32)
    cfg = SolverConfig(max_iter=50000, tol=1e-9)
    beta_star, report = find_beta_star(f, 0.1, cfg, bracket=(1e-4, 1.0), steps=12, detect_tol=1e-4)
    assert report.summary["switch_found"] is True
    assert 1e-4 <= beta_star < report.summary["beta_upper"] <= 1.0
    qualifying = [row["beta"] for row in report.ok_rows if row["qualifies"] > 0]
    assert max(qualifying) == beta_star
    print(f"✅ beta* = {beta_star:.4e}")
