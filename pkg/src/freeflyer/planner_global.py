"""Global minimum-jerk spline planning through a box corridor.

The planner assigns one degree-7 Bezier segment per corridor box along the
box chain and solves a convex QP over stacked control points: jerk energy
objective, endpoint and C0/C1/C2 junction equalities, box-containment bounds
on control points, and componentwise derivative limits certified through
subdivided hodograph control points.  An outer loop shrinks segment
durations with a trust region, accepting a duration only while the
derivative limits stay inactive at the jerk optimum, which lands the total
time where the limits first become tight.

The limit certificates are conservative by the convex-hull property; 16-way
subdivision brings them within ~2 percent of the true extrema, so accepted
durations sit just above the analytic limit-activation time.

All constraints separate by axis, so the planner solves three small QPs per
iteration; the public ``build_spline_qp`` assembles the equivalent stacked
three-axis problem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .bezier import (
    BezierCurve,
    BezierSpline,
    hodograph_matrix,
    jerk_energy_matrix,
    subdivided_max_abs,
    subdivision_matrices,
)
from .core import ActuatorLimits, RigidState, Vec3
from .corridor import Corridor
from .orientation import QuaternionPolynomial, plan_orientation, sample_orientation
from .planner_local import MotionState
from .qp import QpInfeasibleError, QpMaxIterationsError, QpProblem, QpSolution, solve_qp

__all__ = [
    "PlanRequest",
    "GlobalPlan",
    "SolverStats",
    "PlanInfeasibleError",
    "build_spline_qp",
    "plan_global",
    "CERT_SUBDIVISIONS",
]

CERT_SUBDIVISIONS = 16
_MIN_SEGMENT_DURATION = 0.1
_MIN_TRUST = 5e-3
_QP_TOL = 1e-7
_QP_MAX_ITERS = 20000
_FEAS_GROWTH_TRIES = 12
# Peak-rate factor of the rest-to-rest quintic time profile, used to floor
# the horizon so the orientation plan respects the angular-velocity limit.
_QUINTIC_PEAK_RATE = 15.0 / 8.0


class PlanInfeasibleError(RuntimeError):
    """No feasible plan was found; the message names the violated constraint class."""


@dataclass(frozen=True)
class PlanRequest:
    """Global-planning problem statement.

    ``clearance`` shrinks every box face before containment constraints are
    formed, keeping the body's center that far from corridor walls.
    """

    start: RigidState
    goal: RigidState
    corridor: Corridor
    limits: ActuatorLimits
    degree: int = 7
    max_scp_iters: int = 25
    trust_region: float = 0.2
    clearance: float = 0.0

    def __post_init__(self) -> None:
        if self.degree < 5:
            raise ValueError(f"planning degree must be >= 5, got {self.degree}")
        if not 0.0 < self.trust_region < 1.0:
            raise ValueError(f"trust_region must be in (0, 1), got {self.trust_region}")
        if self.max_scp_iters < 1:
            raise ValueError("max_scp_iters must be >= 1")
        if self.clearance < 0.0:
            raise ValueError(f"clearance must be >= 0, got {self.clearance}")
        if not self.corridor.contains_point(self.start.position):
            raise ValueError(f"start position {self.start.position} outside corridor")
        if not self.corridor.contains_point(self.goal.position):
            raise ValueError(f"goal position {self.goal.position} outside corridor")


@dataclass
class SolverStats:
    scp_iterations: int = 0
    qp_iterations: int = 0
    final_qp_residual: float = 0.0
    wall_time: float = 0.0
    converged: bool = True
    warning: str | None = None
    accepted_totals: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class GlobalPlan:
    """Planned spline, per-segment orientation polynomials, and certificates."""

    spline: BezierSpline
    orientation: tuple[QuaternionPolynomial, ...]
    box_sequence: tuple[int, ...]
    total_duration: float
    jerk_cost: float
    stats: SolverStats = field(compare=False)

    def reference_at(self, t: float) -> MotionState:
        """Full reference state at time t (clamped to the plan horizon)."""
        t = min(max(t, 0.0), self.total_duration)
        pos = self.spline.evaluate(t)
        vel = self.spline.velocity(t)
        acc = self.spline.acceleration(t)
        starts = self.spline.segment_start_times
        idx = len(starts) - 1
        for k in range(len(starts) - 1):
            if t < starts[k + 1]:
                idx = k
                break
        local = min(max(t - starts[idx], 0.0), self.orientation[idx].duration)
        quat, omega, alpha = sample_orientation(self.orientation[idx], local)
        return MotionState(
            RigidState(pos, quat, vel, omega),
            linear_acceleration=acc,
            angular_acceleration=alpha,
        )


# ---------------------------------------------------------------------------
# QP assembly


def _axis_matrices(degree: int, durations: list[float]):
    """Per-segment jerk, velocity-map, and acceleration-map matrices."""
    jerk = [jerk_energy_matrix(degree, t) for t in durations]
    vel = [hodograph_matrix(degree, t) for t in durations]
    acc = [hodograph_matrix(degree - 1, t) @ v for t, v in zip(durations, vel)]
    return jerk, vel, acc


def _axis_problem(
    req: PlanRequest,
    box_seq: list[int],
    durations: list[float],
    axis: int,
    include_limits: bool,
    hessian_scale: float = 1.0,
) -> QpProblem:
    """Single-axis QP: every planner constraint is axis-separable.

    ``hessian_scale`` divides the jerk objective (preconditioning only; the
    minimizer is unchanged).  Short segments make the raw jerk matrices huge
    (1/T^5), which would put the solver's absolute stationarity tolerance
    out of floating-point reach.
    """
    n = req.degree
    width = n + 1
    segs = len(durations)
    dim = segs * width
    jerk, vel, acc = _axis_matrices(n, durations)

    hessian = np.zeros((dim, dim))
    for s in range(segs):
        sl = slice(s * width, (s + 1) * width)
        hessian[sl, sl] = jerk[s] / hessian_scale

    p0 = req.start.position.to_tuple()[axis]
    v0 = req.start.linear_velocity.to_tuple()[axis]
    p1 = req.goal.position.to_tuple()[axis]
    v1 = req.goal.linear_velocity.to_tuple()[axis]

    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add_row(values: dict[int, np.ndarray], target: float) -> None:
        row = np.zeros(dim)
        for seg, vec in values.items():
            row[seg * width : (seg + 1) * width] += vec
        rows.append(row)
        rhs.append(target)

    e_first = np.zeros(width)
    e_first[0] = 1.0
    e_last = np.zeros(width)
    e_last[-1] = 1.0

    add_row({0: e_first}, p0)
    add_row({0: vel[0][0]}, v0)
    add_row({0: acc[0][0]}, 0.0)
    last = segs - 1
    add_row({last: e_last}, p1)
    add_row({last: vel[last][-1]}, v1)
    add_row({last: acc[last][-1]}, 0.0)
    for k in range(segs - 1):
        add_row({k: e_last, k + 1: -e_first}, 0.0)
        add_row({k: vel[k][-1], k + 1: -vel[k + 1][0]}, 0.0)
        add_row({k: acc[k][-1], k + 1: -acc[k + 1][0]}, 0.0)

    a_eq = np.array(rows)
    b_eq = np.array(rhs)

    ineq_rows: list[np.ndarray] = []
    ineq_rhs: list[float] = []

    def add_ineq(seg: int, mat: np.ndarray, bound_hi: np.ndarray, bound_lo: np.ndarray):
        block = np.zeros((mat.shape[0], dim))
        block[:, seg * width : (seg + 1) * width] = mat
        ineq_rows.append(block)
        ineq_rhs.append(bound_hi)
        ineq_rows.append(-block)
        ineq_rhs.append(-bound_lo)

    eye = np.eye(width)
    for s, box_idx in enumerate(box_seq):
        try:
            box = req.corridor.boxes[box_idx].shrunk(req.clearance)
        except ValueError as exc:
            raise PlanInfeasibleError(f"containment: {exc}") from exc
        hi = box.max_corner.to_tuple()[axis]
        lo = box.min_corner.to_tuple()[axis]
        add_ineq(s, eye, np.full(width, hi), np.full(width, lo))

    if include_limits:
        sub_v = np.vstack(subdivision_matrices(n - 1, CERT_SUBDIVISIONS))
        sub_a = np.vstack(subdivision_matrices(n - 2, CERT_SUBDIVISIONS))
        vmax = req.limits.max_velocity
        amax = req.limits.max_acceleration
        for s in range(segs):
            sv = sub_v @ vel[s]
            sa = sub_a @ acc[s]
            add_ineq(s, sv, np.full(sv.shape[0], vmax), np.full(sv.shape[0], -vmax))
            add_ineq(s, sa, np.full(sa.shape[0], amax), np.full(sa.shape[0], -amax))

    c_ineq = np.vstack(ineq_rows) if ineq_rows else np.zeros((0, dim))
    d_ineq = np.concatenate(ineq_rhs) if ineq_rhs else np.zeros(0)
    return QpProblem(hessian, np.zeros(dim), a_eq, b_eq, c_ineq, d_ineq)


def build_spline_qp(req: PlanRequest, durations: list[float]) -> QpProblem:
    """Stacked three-axis spline QP over all segment control points.

    Variable layout is axis-major: x-axis control points of all segments,
    then y, then z; within an axis, segment by segment, control point by
    control point.  One duration per box in the box sequence is required.
    """
    box_seq = req.corridor.box_sequence_for(req.start.position, req.goal.position)
    if len(durations) != len(box_seq):
        raise ValueError(
            f"expected {len(box_seq)} durations (one per box in sequence), "
            f"got {len(durations)}"
        )
    if any(t <= 0.0 for t in durations):
        raise ValueError("durations must all be positive")
    axis_problems = [
        _axis_problem(req, box_seq, list(durations), axis, include_limits=True)
        for axis in range(3)
    ]
    hessian = sla.block_diag(*[p.hessian for p in axis_problems])
    a_eq = sla.block_diag(*[p.a_eq for p in axis_problems])
    c_ineq = sla.block_diag(*[p.c_ineq for p in axis_problems])
    return QpProblem(
        hessian,
        np.zeros(hessian.shape[0]),
        a_eq,
        np.concatenate([p.b_eq for p in axis_problems]),
        c_ineq,
        np.concatenate([p.d_ineq for p in axis_problems]),
    )


# ---------------------------------------------------------------------------
# Certificates


def _segment_points(solution_by_axis: list[np.ndarray], width: int, seg: int) -> np.ndarray:
    return np.column_stack(
        [solution_by_axis[axis][seg * width : (seg + 1) * width] for axis in range(3)]
    )


def _limit_certificates(
    points: np.ndarray, duration: float
) -> tuple[float, float]:
    """Certified max |velocity| and |acceleration| components of one segment."""
    degree = points.shape[0] - 1
    vel_pts = hodograph_matrix(degree, duration) @ points
    acc_pts = hodograph_matrix(degree - 1, duration) @ vel_pts
    return (
        subdivided_max_abs(vel_pts, CERT_SUBDIVISIONS),
        subdivided_max_abs(acc_pts, CERT_SUBDIVISIONS),
    )


def _limits_clean(
    solution_by_axis: list[np.ndarray],
    durations: list[float],
    limits: ActuatorLimits,
    width: int,
) -> bool:
    for seg, t in enumerate(durations):
        pts = _segment_points(solution_by_axis, width, seg)
        vmax, amax = _limit_certificates(pts, t)
        if vmax > limits.max_velocity or amax > limits.max_acceleration:
            return False
    return True


def _arc_lengths(
    solution_by_axis: list[np.ndarray], durations: list[float], width: int
) -> list[float]:
    lengths = []
    for seg, t in enumerate(durations):
        pts = _segment_points(solution_by_axis, width, seg)
        curve = BezierCurve.from_array(pts, t)
        samples = [curve.evaluate(t * k / 16.0) for k in range(17)]
        length = sum(
            (samples[k + 1] - samples[k]).norm() for k in range(16)
        )
        lengths.append(max(length, 1e-6))
    return lengths


# ---------------------------------------------------------------------------
# The SCP outer loop


def plan_global(req: PlanRequest) -> GlobalPlan:
    """Plan a time-optimal minimum-jerk spline through the corridor.

    Durations are initialized from a path-length heuristic, grown until the
    derivative limits are met, then shrunk by a trust-region backtracking
    search (rebalancing segment durations by arc length) for as long as the
    jerk-optimal solution keeps the limits inactive.  The accepted total
    duration is non-increasing.  The returned plan carries containment,
    junction-continuity, and derivative-limit certificates.
    """
    t_wall = time.perf_counter()
    stats = SolverStats()
    corridor = req.corridor
    box_seq = corridor.box_sequence_for(req.start.position, req.goal.position)
    segs = len(box_seq)
    width = req.degree + 1

    waypoints = [req.start.position]
    for k in range(segs - 1):
        waypoints.append(corridor.overlap_center(box_seq[k], box_seq[k + 1]))
    waypoints.append(req.goal.position)
    chord = [
        (waypoints[k + 1] - waypoints[k]).norm() for k in range(segs)
    ]

    rotation = req.start.orientation.angle_to(req.goal.orientation)
    min_total = max(
        segs * _MIN_SEGMENT_DURATION,
        _QUINTIC_PEAK_RATE * rotation / req.limits.max_angular_velocity,
    )

    durations = [
        max(_MIN_SEGMENT_DURATION, c / (0.4 * req.limits.max_velocity)) for c in chord
    ]
    if sum(durations) < min_total:
        scale = min_total / sum(durations)
        durations = [t * scale for t in durations]

    warm: list[QpSolution | None] = [None, None, None]

    def objective_scale(durs: list[float]) -> float:
        return max(
            1.0,
            max(
                float(np.abs(jerk_energy_matrix(req.degree, t)).max()) for t in durs
            ),
        )

    def solve_axes(durs: list[float]) -> tuple[list[np.ndarray], float] | None:
        """Solve the three limit-free axis QPs; None if any is unsolvable."""
        sols = []
        cost = 0.0
        scale = objective_scale(durs)
        for axis in range(3):
            problem = _axis_problem(
                req, box_seq, durs, axis, include_limits=False, hessian_scale=scale
            )
            try:
                sol = solve_qp(problem, tol=_QP_TOL, max_iters=_QP_MAX_ITERS, warm_start=warm[axis])
            except (QpInfeasibleError, QpMaxIterationsError):
                return None
            warm[axis] = sol
            stats.qp_iterations += sol.iterations
            cost += problem.objective(sol.x) * scale
            sols.append(sol.x)
        return sols, cost

    # Phase A: grow durations until the jerk optimum respects the limits.
    current: tuple[list[np.ndarray], float] | None = None
    for attempt in range(_FEAS_GROWTH_TRIES + 1):
        result = solve_axes(durations)
        if result is not None and _limits_clean(result[0], durations, req.limits, width):
            current = result
            break
        if attempt == _FEAS_GROWTH_TRIES:
            raise PlanInfeasibleError(
                "velocity/acceleration limits: no duration up to "
                f"{sum(durations):.3g} s yields a limit-feasible jerk-optimal spline"
            )
        durations = [2.0 * t for t in durations]
    assert current is not None

    best_sols, best_cost = current
    best_durations = list(durations)
    stats.accepted_totals.append(sum(best_durations))

    # Phase B: monotone trust-region shrink of the total duration.
    trust = req.trust_region
    while stats.scp_iterations < req.max_scp_iters and trust >= _MIN_TRUST:
        stats.scp_iterations += 1
        total = sum(best_durations)
        proposal_total = max(total * (1.0 - trust), min_total)
        if proposal_total >= total * (1.0 - 1e-9):
            break
        lengths = _arc_lengths(best_sols, best_durations, width)
        total_len = sum(lengths)
        proposal = [
            max(_MIN_SEGMENT_DURATION, proposal_total * L / total_len) for L in lengths
        ]
        result = solve_axes(proposal)
        if result is not None and _limits_clean(result[0], proposal, req.limits, width):
            best_sols, best_cost = result
            best_durations = proposal
            stats.accepted_totals.append(sum(best_durations))
        else:
            trust *= 0.5

    converged = trust < _MIN_TRUST or sum(best_durations) <= min_total * (1.0 + 1e-9)
    stats.converged = converged
    if not converged:
        stats.warning = (
            "duration search stopped at the SCP iteration cap; "
            "returning the best feasible plan found"
        )

    # Final authoritative solve of the full QP (limit rows included) at the
    # accepted durations; limits are inactive there, so the optimum matches.
    final_sols: list[np.ndarray] = []
    jerk_cost = 0.0
    residual = 0.0
    final_scale = objective_scale(best_durations)
    for axis in range(3):
        problem = _axis_problem(
            req, box_seq, best_durations, axis, include_limits=True,
            hessian_scale=final_scale,
        )
        try:
            sol = solve_qp(problem, tol=_QP_TOL, max_iters=_QP_MAX_ITERS)
        except QpInfeasibleError as exc:
            raise PlanInfeasibleError(f"containment/limits: {exc}") from exc
        except QpMaxIterationsError as exc:
            raise PlanInfeasibleError(
                f"final QP did not converge: {exc}"
            ) from exc
        stats.qp_iterations += sol.iterations
        residual = max(residual, sol.max_residual)
        jerk_cost += problem.objective(sol.x) * final_scale
        final_sols.append(sol.x)

    segments = _assemble_segments(final_sols, best_durations, width)
    spline = BezierSpline(tuple(segments))
    _certify(spline, req, box_seq)

    orientation = _plan_segment_orientations(req, spline)

    stats.final_qp_residual = residual
    stats.wall_time = time.perf_counter() - t_wall
    return GlobalPlan(
        spline=spline,
        orientation=orientation,
        box_sequence=tuple(box_seq),
        total_duration=spline.total_duration,
        jerk_cost=jerk_cost,
        stats=stats,
    )


def _assemble_segments(
    solution_by_axis: list[np.ndarray], durations: list[float], width: int
) -> list[BezierCurve]:
    segments = []
    prev_last: Vec3 | None = None
    for seg, t in enumerate(durations):
        pts = _segment_points(solution_by_axis, width, seg)
        curve_pts = [Vec3(*row) for row in pts]
        if prev_last is not None:
            # Weld junctions exactly; the solver residual there is ~1e-10.
            curve_pts[0] = prev_last
        prev_last = curve_pts[-1]
        segments.append(BezierCurve(tuple(curve_pts), t))
    return segments


class _CertificateError(PlanInfeasibleError):
    pass


def _certify(spline: BezierSpline, req: PlanRequest, box_seq: list[int]) -> None:
    """Verify containment, junction continuity, and limit certificates."""
    for seg, box_idx in zip(spline.segments, box_seq):
        box = req.corridor.boxes[box_idx]
        for p in seg.control_points:
            if box.margin(p) < -1e-7:
                raise _CertificateError(
                    f"containment certificate failed in box {box_idx}: "
                    f"control point {p} outside by {-box.margin(p):.2e} m"
                )
        vmax, amax = _limit_certificates(seg.points_array(), seg.duration)
        if vmax > req.limits.max_velocity * (1.0 + 1e-6) + 1e-9:
            raise _CertificateError(f"velocity certificate failed: {vmax:.4g}")
        if amax > req.limits.max_acceleration * (1.0 + 1e-6) + 1e-9:
            raise _CertificateError(f"acceleration certificate failed: {amax:.4g}")
    for k in range(len(spline.segments) - 1):
        a, b = spline.segments[k], spline.segments[k + 1]
        dv = (a.velocity(a.duration) - b.velocity(0.0)).norm()
        da = (a.acceleration(a.duration) - b.acceleration(0.0)).norm()
        if dv > 1e-8 or da > 1e-8:
            raise _CertificateError(
                f"junction {k} continuity residual too large: dv={dv:.2e} da={da:.2e}"
            )


def _plan_segment_orientations(
    req: PlanRequest, spline: BezierSpline
) -> tuple[QuaternionPolynomial, ...]:
    """One full-horizon quaternion quintic, re-fit per segment at junctions."""
    total = spline.total_duration
    full = plan_orientation(
        req.start.orientation,
        req.start.angular_velocity,
        Vec3.zero(),
        req.goal.orientation,
        req.goal.angular_velocity,
        Vec3.zero(),
        total,
    )
    polys = []
    starts = spline.segment_start_times
    for k, seg in enumerate(spline.segments):
        t0 = starts[k]
        t1 = t0 + seg.duration
        q0, w0, a0 = sample_orientation(full, t0)
        q1, w1, a1 = sample_orientation(full, min(t1, total))
        polys.append(plan_orientation(q0, w0, a0, q1, w1, a1, seg.duration))
    return tuple(polys)
