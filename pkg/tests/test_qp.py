import numpy as np
import pytest

from freeflyer.qp import (
    QpInfeasibleError,
    QpMaxIterationsError,
    QpProblem,
    solve_qp,
)
from reference_qp import solve_qp_active_set


def make_problem(h, g, a=None, b=None, c=None, d=None) -> QpProblem:
    n = len(g)
    return QpProblem(
        hessian=np.asarray(h, dtype=float),
        linear_cost=np.asarray(g, dtype=float),
        a_eq=np.zeros((0, n)) if a is None else np.asarray(a, dtype=float),
        b_eq=np.zeros(0) if b is None else np.asarray(b, dtype=float),
        c_ineq=np.zeros((0, n)) if c is None else np.asarray(c, dtype=float),
        d_ineq=np.zeros(0) if d is None else np.asarray(d, dtype=float),
    )


def random_problem(rng: np.random.Generator, n: int = 20, m: int = 10) -> QpProblem:
    """Random strictly convex QP with a mix of equality and box-ish rows."""
    root = rng.normal(size=(n, n))
    hessian = root.T @ root + 0.5 * np.eye(n)
    g = rng.normal(size=n)
    n_eq = int(rng.integers(0, 4))
    a = rng.normal(size=(n_eq, n))
    x_feas = rng.normal(size=n)
    b = a @ x_feas
    n_ineq = m - n_eq
    c = rng.normal(size=(n_ineq, n))
    # Keep x_feas strictly feasible so the problem is never empty.
    d = c @ x_feas + rng.uniform(0.05, 1.0, size=n_ineq)
    return make_problem(hessian, g, a, b, c, d)


class TestBasicCases:
    def test_projection_onto_equality(self):
        # minimize |x|^2 subject to x0 = 1.
        n = 5
        p = make_problem(
            2 * np.eye(n), np.zeros(n), a=np.eye(n)[:1], b=[1.0]
        )
        sol = solve_qp(p, tol=1e-9)
        expected = np.zeros(n)
        expected[0] = 1.0
        np.testing.assert_allclose(sol.x, expected, atol=1e-8)

    def test_active_upper_bound(self):
        # minimize (x - 2)^2 subject to 0 <= x <= 1 -> x = 1.
        p = make_problem(
            [[2.0]], [-4.0], c=[[1.0], [-1.0]], d=[1.0, 0.0]
        )
        sol = solve_qp(p, tol=1e-9)
        assert sol.x[0] == pytest.approx(1.0, abs=1e-8)

    def test_unconstrained_fast_path(self):
        p = make_problem([[2.0, 0.0], [0.0, 4.0]], [-2.0, -8.0])
        sol = solve_qp(p, tol=1e-10)
        assert sol.fast_path
        np.testing.assert_allclose(sol.x, [1.0, 2.0], atol=1e-10)

    def test_inactive_inequalities_take_fast_path(self):
        p = make_problem(
            [[2.0]], [-2.0], c=[[1.0]], d=[10.0]
        )
        sol = solve_qp(p, tol=1e-10)
        assert sol.fast_path
        assert sol.x[0] == pytest.approx(1.0, abs=1e-10)


class TestAgainstActiveSetReference:
    def test_random_problems_match(self):
        rng = np.random.default_rng(2024)
        for _ in range(40):
            p = random_problem(rng)
            sol = solve_qp(p, tol=1e-8, max_iters=50_000)
            ref = solve_qp_active_set(
                p.hessian, p.linear_cost, p.a_eq, p.b_eq, p.c_ineq, p.d_ineq
            )
            assert np.max(np.abs(sol.x - ref)) < 1e-6

    def test_equality_heavy_problems_match(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = 12
            root = rng.normal(size=(n, n))
            h = root.T @ root + np.eye(n)
            g = rng.normal(size=n)
            a = rng.normal(size=(5, n))
            b = rng.normal(size=5)
            p = make_problem(h, g, a, b)
            sol = solve_qp(p, tol=1e-9)
            ref = solve_qp_active_set(h, g, a, b, np.zeros((0, n)), np.zeros(0))
            assert np.max(np.abs(sol.x - ref)) < 1e-7


class TestResidualContract:
    def test_residuals_below_tolerance(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = random_problem(rng, n=15, m=8)
            sol = solve_qp(p, tol=1e-8, max_iters=50_000)
            assert sol.eq_residual <= 1e-8
            assert sol.ineq_violation <= 1e-8
            assert sol.stationarity <= 1e-8

    def test_warm_start_reuses_previous_solution(self):
        rng = np.random.default_rng(11)
        p = random_problem(rng)
        cold = solve_qp(p, tol=1e-8, max_iters=50_000)
        # Perturb the linear cost slightly and re-solve warm.
        p2 = QpProblem(
            p.hessian,
            p.linear_cost + 1e-3 * rng.normal(size=p.n),
            p.a_eq,
            p.b_eq,
            p.c_ineq,
            p.d_ineq,
        )
        warm = solve_qp(p2, tol=1e-8, max_iters=50_000, warm_start=cold)
        ref = solve_qp_active_set(
            p2.hessian, p2.linear_cost, p2.a_eq, p2.b_eq, p2.c_ineq, p2.d_ineq
        )
        assert np.max(np.abs(warm.x - ref)) < 1e-6
        assert warm.iterations <= cold.iterations + 200


class TestErrors:
    def test_detects_infeasible_equality_vs_bound(self):
        # x0 = 1 conflicts with x0 <= 0.
        p = make_problem(
            [[2.0, 0.0], [0.0, 2.0]],
            [0.0, 0.0],
            a=[[1.0, 0.0]],
            b=[1.0],
            c=[[1.0, 0.0]],
            d=[0.0],
        )
        with pytest.raises(QpInfeasibleError):
            solve_qp(p, tol=1e-8, max_iters=50_000)

    def test_detects_contradictory_inequalities(self):
        p = make_problem(
            [[2.0]], [0.0], c=[[1.0], [-1.0]], d=[-1.0, -1.0]  # x <= -1 and x >= 1
        )
        with pytest.raises(QpInfeasibleError):
            solve_qp(p, tol=1e-8, max_iters=50_000)

    def test_max_iterations_error_carries_residuals(self):
        rng = np.random.default_rng(3)
        p = random_problem(rng)
        with pytest.raises(QpMaxIterationsError) as info:
            solve_qp(p, tol=1e-14, max_iters=30)
        assert len(info.value.residuals) == 3

    def test_validation_rejects_indefinite_hessian(self):
        with pytest.raises(ValueError, match="PSD"):
            make_problem([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])

    def test_validation_rejects_asymmetric_hessian(self):
        with pytest.raises(ValueError, match="symmetric"):
            make_problem([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])

    def test_validation_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            make_problem([[1.0]], [0.0, 1.0])


class TestPsdSingularHessian:
    def test_semidefinite_hessian_with_pinning_equalities(self):
        # Jerk-style objective with a kernel, pinned by boundary equalities.
        d3 = np.zeros((3, 6))
        for i in range(3):
            d3[i, i : i + 4] = (-1, 3, -3, 1)
        h = d3.T @ d3
        a = np.zeros((4, 6))
        a[0, 0] = 1.0
        a[1, 1] = 1.0
        a[2, 5] = 1.0
        a[3, 4] = 1.0
        b = np.array([0.0, 0.0, 1.0, 1.0])
        p = make_problem(h, np.zeros(6), a, b)
        sol = solve_qp(p, tol=1e-9)
        assert sol.eq_residual < 1e-9
        ref = solve_qp_active_set(h, np.zeros(6), a, b, np.zeros((0, 6)), np.zeros(0))
        assert np.max(np.abs(sol.x - ref)) < 1e-7
