"""Dense convex quadratic programming via operator splitting.

Solves  minimize 0.5 x^T H x + g^T x
        subject to A x = b,  C x <= d

with an over-relaxed alternating projection/proximal iteration (ADMM) on the
stacked constraint m = [A; C] with bounds l = [b; -inf], u = [b; d].  The
solver is warm-startable, detects primal infeasibility through the dual-step
certificate, takes a direct KKT fast path when no inequality is active, and
polishes converged iterates on the identified active set so solutions reach
far past the iteration tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpInfeasibleError",
    "QpMaxIterationsError",
    "solve_qp",
]

_SIGMA = 1e-6
_ALPHA = 1.6
_RHO_EQ_SCALE = 1e3
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_CHECK_INTERVAL = 25
# Relative thresholds for the primal-infeasibility certificate; a genuine
# certificate drives the tested ratios many orders below these.
_INFEAS_TOL = 1e-7
_INFEAS_DY_FLOOR = 1e-10


class QpInfeasibleError(RuntimeError):
    """The solver produced a certificate of primal infeasibility."""


class QpMaxIterationsError(RuntimeError):
    """Iteration budget exhausted before reaching the tolerance."""

    def __init__(self, message: str, residuals: tuple[float, float, float]):
        super().__init__(message)
        # (equality residual, inequality violation, stationarity residual)
        self.residuals = residuals


@dataclass(frozen=True)
class QpProblem:
    """Convex QP data; the Hessian must be PSD within 1e-8 eigenvalue tolerance."""

    hessian: np.ndarray
    linear_cost: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    c_ineq: np.ndarray
    d_ineq: np.ndarray

    def __post_init__(self) -> None:
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        g = np.asarray(self.linear_cost, dtype=float).ravel()
        n = g.size
        a = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_eq, dtype=float).ravel()
        c = np.asarray(self.c_ineq, dtype=float).reshape(-1, n)
        d = np.asarray(self.d_ineq, dtype=float).ravel()
        if h.shape != (n, n):
            raise ValueError(f"hessian shape {h.shape} incompatible with n={n}")
        if a.shape[0] != b.size or c.shape[0] != d.size:
            raise ValueError("constraint matrix/vector row counts disagree")
        if not np.allclose(h, h.T, atol=1e-10, rtol=0.0):
            raise ValueError("hessian must be symmetric")
        scale = max(1.0, float(np.abs(h).max()))
        min_eig = float(np.linalg.eigvalsh(h)[0]) if n else 0.0
        if min_eig < -1e-8 * scale:
            raise ValueError(f"hessian is not PSD (min eigenvalue {min_eig:g})")
        for name, arr in (
            ("hessian", h),
            ("linear_cost", g),
            ("a_eq", a),
            ("b_eq", b),
            ("c_ineq", c),
            ("d_ineq", d),
        ):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.linear_cost.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear_cost @ x)


@dataclass
class QpSolution:
    """Primal solution plus multipliers and convergence diagnostics."""

    x: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    iterations: int
    eq_residual: float
    ineq_violation: float
    stationarity: float
    fast_path: bool = False
    polished: bool = False
    _z: np.ndarray | None = field(default=None, repr=False)

    @property
    def max_residual(self) -> float:
        return max(self.eq_residual, self.ineq_violation, self.stationarity)


def _residuals(
    p: QpProblem, x: np.ndarray, y_eq: np.ndarray, y_ineq: np.ndarray
) -> tuple[float, float, float]:
    eq = float(np.abs(p.a_eq @ x - p.b_eq).max()) if p.b_eq.size else 0.0
    ineq = (
        float(np.maximum(p.c_ineq @ x - p.d_ineq, 0.0).max()) if p.d_ineq.size else 0.0
    )
    grad = p.hessian @ x + p.linear_cost
    if p.b_eq.size:
        grad = grad + p.a_eq.T @ y_eq
    if p.d_ineq.size:
        grad = grad + p.c_ineq.T @ y_ineq
    stat = float(np.abs(grad).max()) if grad.size else 0.0
    return eq, ineq, stat


def _try_fast_path(p: QpProblem, tol: float) -> QpSolution | None:
    """Solve the equality-constrained KKT system; valid if no inequality binds."""
    n, me = p.n, p.b_eq.size
    kkt = np.zeros((n + me, n + me))
    kkt[:n, :n] = p.hessian
    if me:
        kkt[:n, n:] = p.a_eq.T
        kkt[n:, :n] = p.a_eq
    rhs = np.concatenate([-p.linear_cost, p.b_eq])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        return None
    x, y_eq = sol[:n], sol[n:]
    y_ineq = np.zeros(p.d_ineq.size)
    eq, ineq, stat = _residuals(p, x, y_eq, y_ineq)
    if max(eq, ineq, stat) <= tol:
        return QpSolution(x, y_eq, y_ineq, 0, eq, ineq, stat, fast_path=True)
    return None


def _polish(
    p: QpProblem, x: np.ndarray, y_eq: np.ndarray, y_ineq: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Re-solve on the identified active set for high-accuracy solutions."""
    n, me, mi = p.n, p.b_eq.size, p.d_ineq.size
    if mi:
        slack = p.d_ineq - p.c_ineq @ x
        active = (slack <= 10.0 * tol * (1.0 + np.abs(p.d_ineq))) | (
            y_ineq > 10.0 * tol
        )
    else:
        active = np.zeros(0, dtype=bool)
    for _ in range(4):
        rows = np.flatnonzero(active)
        m_act = np.vstack([p.a_eq, p.c_ineq[rows]]) if me or rows.size else np.zeros((0, n))
        rhs_act = np.concatenate([p.b_eq, p.d_ineq[rows]])
        k = m_act.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = p.hessian
        if k:
            kkt[:n, n:] = m_act.T
            kkt[n:, :n] = m_act
        rhs = np.concatenate([-p.linear_cost, rhs_act])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        if not np.all(np.isfinite(sol)):
            return None
        x_new = sol[:n]
        y_eq_new = sol[n : n + me]
        y_act = sol[n + me :]
        # Drop active inequalities whose multiplier came out negative.
        negative = y_act < -1e-9
        if negative.any():
            active = active.copy()
            active[rows[negative]] = False
            continue
        y_ineq_new = np.zeros(mi)
        y_ineq_new[rows] = y_act
        return x_new, y_eq_new, y_ineq_new
    return None


def solve_qp(
    problem: QpProblem,
    tol: float = 1e-8,
    max_iters: int = 20000,
    warm_start: QpSolution | None = None,
) -> QpSolution:
    """Solve a convex QP to the requested absolute residual tolerance.

    Args:
        problem: QP data (PSD Hessian, equalities, inequalities).
        tol: bound on equality residual, inequality violation, and
            stationarity residual of the returned solution.
        max_iters: splitting-iteration budget.
        warm_start: previous solution for a related problem (same shapes).

    Raises:
        QpInfeasibleError: a primal infeasibility certificate was found.
        QpMaxIterationsError: budget exhausted; carries the residual triple.
    """
    n, me, mi = problem.n, problem.b_eq.size, problem.d_ineq.size
    m = me + mi

    usable_warm = (
        warm_start is not None
        and warm_start.x.size == n
        and warm_start.y_eq.size == me
        and warm_start.y_ineq.size == mi
    )
    if not usable_warm:
        fast = _try_fast_path(problem, tol)
        if fast is not None:
            return fast

    if m == 0:
        # No constraints and the fast path failed: the QP is unbounded below.
        raise QpMaxIterationsError(
            "unconstrained QP has no finite minimizer", (0.0, 0.0, np.inf)
        )

    mat = np.vstack([problem.a_eq, problem.c_ineq])
    lower = np.concatenate([problem.b_eq, np.full(mi, -np.inf)])
    upper = np.concatenate([problem.b_eq, problem.d_ineq])

    rho = np.full(m, 0.1)
    rho[:me] *= _RHO_EQ_SCALE

    if usable_warm:
        x = warm_start.x.copy()
        y = np.concatenate([warm_start.y_eq, warm_start.y_ineq])
        z = (
            warm_start._z.copy()
            if warm_start._z is not None and warm_start._z.size == m
            else mat @ x
        )
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)

    def factor(rho_vec: np.ndarray):
        k = problem.hessian + _SIGMA * np.eye(n) + (mat.T * rho_vec) @ mat
        return scipy.linalg.cho_factor(k, check_finite=False)

    chol = factor(rho)
    y_at_last_check = y.copy()
    iters_done = 0

    for it in range(1, max_iters + 1):
        iters_done = it
        rhs = _SIGMA * x - problem.linear_cost + mat.T @ (rho * z - y)
        x_tilde = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
        z_tilde = mat @ x_tilde
        x = _ALPHA * x_tilde + (1.0 - _ALPHA) * x
        z_blend = _ALPHA * z_tilde + (1.0 - _ALPHA) * z
        z = np.clip(z_blend + y / rho, lower, upper)
        y = y + rho * (z_blend - z)

        if it % _CHECK_INTERVAL:
            continue

        y_eq_cur, y_ineq_cur = y[:me], np.maximum(y[me:], 0.0)
        eq, ineq, stat = _residuals(problem, x, y_eq_cur, y_ineq_cur)
        if max(eq, ineq, stat) <= tol:
            break

        # Primal infeasibility certificate from the dual update direction.
        dy = y - y_at_last_check
        y_at_last_check = y.copy()
        dy_norm = float(np.abs(dy).max()) if m else 0.0
        if dy_norm > _INFEAS_DY_FLOOR * (1.0 + float(np.abs(y).max())):
            dy_plus = np.maximum(dy, 0.0)
            dy_minus = np.minimum(dy, 0.0)
            finite_lower = np.isfinite(lower)
            spurious = float(np.abs(dy_minus[~finite_lower]).max(initial=0.0))
            if (
                float(np.abs(mat.T @ dy).max()) <= _INFEAS_TOL * dy_norm
                and spurious <= _INFEAS_TOL * dy_norm
                and float(upper @ dy_plus + lower[finite_lower] @ dy_minus[finite_lower])
                < -_INFEAS_TOL * dy_norm
            ):
                raise QpInfeasibleError(
                    "primal infeasibility certificate found "
                    f"after {it} iterations"
                )

        # Rebalance the penalty when primal/dual progress diverges.
        prim = float(np.abs(mat @ x - z).max()) if m else 0.0
        dual = stat
        if prim > 1e-12 and dual > 1e-12:
            ratio = math.sqrt(prim / dual)
            if ratio > 5.0 or ratio < 0.2:
                rho = np.clip(rho * ratio, _RHO_MIN, _RHO_MAX)
                chol = factor(rho)
    else:
        y_eq_cur, y_ineq_cur = y[:me], np.maximum(y[me:], 0.0)
        eq, ineq, stat = _residuals(problem, x, y_eq_cur, y_ineq_cur)
        if max(eq, ineq, stat) > tol:
            raise QpMaxIterationsError(
                f"no convergence in {max_iters} iterations "
                f"(residuals eq={eq:.2e} ineq={ineq:.2e} stat={stat:.2e})",
                (eq, ineq, stat),
            )

    y_eq, y_ineq = y[:me], np.maximum(y[me:], 0.0)
    eq, ineq, stat = _residuals(problem, x, y_eq, y_ineq)
    solution = QpSolution(x, y_eq, y_ineq, iters_done, eq, ineq, stat, _z=z.copy())

    refined = _polish(problem, x, y_eq, y_ineq, tol)
    if refined is not None:
        x_p, y_eq_p, y_ineq_p = refined
        eq_p, ineq_p, stat_p = _residuals(problem, x_p, y_eq_p, y_ineq_p)
        if max(eq_p, ineq_p, stat_p) <= max(eq, ineq, stat):
            solution = QpSolution(
                x_p,
                y_eq_p,
                y_ineq_p,
                iters_done,
                eq_p,
                ineq_p,
                stat_p,
                polished=True,
                _z=z.copy(),
            )

    if solution.max_residual > tol:
        raise QpMaxIterationsError(
            "converged iterate failed the final residual check "
            f"(eq={solution.eq_residual:.2e} ineq={solution.ineq_violation:.2e} "
            f"stat={solution.stationarity:.2e})",
            (solution.eq_residual, solution.ineq_violation, solution.stationarity),
        )
    return solution
