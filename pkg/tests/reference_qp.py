"""Independent active-set QP reference used as a test oracle.

Deliberately shares no code with the package's operator-splitting solver:
plain primal active-set iteration on dense KKT systems solved with numpy.
Only suitable for small problems with a positive-definite reduced Hessian,
which is all the oracle needs.
"""

from __future__ import annotations

import numpy as np


def solve_qp_active_set(
    hessian: np.ndarray,
    linear_cost: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    c_ineq: np.ndarray,
    d_ineq: np.ndarray,
    max_rounds: int = 200,
    tol: float = 1e-10,
) -> np.ndarray:
    """Minimize 0.5 x'Hx + g'x s.t. Ax = b, Cx <= d by active-set iteration."""
    n = linear_cost.size
    me = b_eq.size
    mi = d_ineq.size
    active: set[int] = set()

    def kkt_solve(active_rows: list[int]) -> tuple[np.ndarray, np.ndarray]:
        rows = np.vstack([a_eq, c_ineq[active_rows]]) if me or active_rows else np.zeros((0, n))
        rhs_rows = np.concatenate([b_eq, d_ineq[active_rows]])
        k = rows.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = hessian
        if k:
            kkt[:n, n:] = rows.T
            kkt[n:, :n] = rows
        rhs = np.concatenate([-linear_cost, rhs_rows])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        return sol[:n], sol[n + me :]

    for _ in range(max_rounds):
        rows = sorted(active)
        x, multipliers = kkt_solve(rows)
        if mi:
            violation = c_ineq @ x - d_ineq
            worst = int(np.argmax(violation))
            if violation[worst] > tol:
                active.add(worst)
                continue
        if rows:
            most_negative = int(np.argmin(multipliers))
            if multipliers[most_negative] < -tol:
                active.discard(rows[most_negative])
                continue
        return x
    raise RuntimeError("active-set reference did not settle")
