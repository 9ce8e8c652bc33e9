"""Fifth-order quaternion-polynomial orientation planning.

A raw quaternion-valued quintic interpolates boundary conditions on
orientation, angular velocity, and angular acceleration at both ends; the
output orientation is the normalized polynomial.  The rate boundary
conditions are mapped to quaternion derivatives at the endpoints, where the
raw polynomial has unit norm by construction, so the mapping is exact there;
interior normalization introduces a small, documented deviation from
geodesic motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bezier import BezierSpline
from .core import UnitQuaternion, Vec3, _raw_multiply

__all__ = [
    "DegeneratePathError",
    "QuaternionPolynomial",
    "plan_orientation",
    "sample_orientation",
    "FaceForwardPlan",
    "face_forward_plan",
]

# Below this raw-polynomial norm, normalization amplifies coefficient error
# unacceptably; callers must split the motion instead.
_MIN_RAW_NORM = 0.1
_NORM_CHECK_SAMPLES = 100

_STALL_SPEED = 1e-4  # m/s; below this the face-forward frame is held


class DegeneratePathError(ValueError):
    """The raw quaternion polynomial passes too close to zero."""


@dataclass(frozen=True)
class QuaternionPolynomial:
    """Raw quaternion quintic q~(t) = sum_k c_k (t/T)^k, output q~/|q~|."""

    coefficients: tuple[tuple[float, float, float, float], ...]
    duration: float

    def __post_init__(self) -> None:
        coeffs = tuple(tuple(float(v) for v in c) for c in self.coefficients)
        if len(coeffs) != 6 or any(len(c) != 4 for c in coeffs):
            raise ValueError("expected 6 quaternion-valued coefficients c0..c5")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "duration", float(self.duration))
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"duration must be > 0, got {self.duration}")
        c = self._coeff_array
        s = np.linspace(0.0, 1.0, _NORM_CHECK_SAMPLES)
        vander = np.vander(s, 6, increasing=True)
        norms = np.linalg.norm(vander @ c, axis=1)
        if float(norms.min()) < _MIN_RAW_NORM:
            raise DegeneratePathError(
                f"raw quaternion polynomial norm dips to {norms.min():.3g} "
                f"(< {_MIN_RAW_NORM}); split the motion into smaller arcs"
            )

    @cached_property
    def _coeff_array(self) -> np.ndarray:
        return np.array(self.coefficients)

    def _raw_eval(
        self, t: float
    ) -> tuple[
        tuple[float, float, float, float],
        tuple[float, float, float, float],
        tuple[float, float, float, float],
    ]:
        """Raw value and first/second time derivatives at t.

        Pure-float Horner evaluation: this sits inside every MPC rollout
        step, where per-call numpy overhead would dominate.
        """
        if t < -1e-9 or t > self.duration + 1e-9:
            raise ValueError(f"time {t} outside [0, {self.duration}]")
        t = min(max(t, 0.0), self.duration)
        s = t / self.duration
        c0, c1, c2, c3, c4, c5 = self.coefficients
        inv_t = 1.0 / self.duration
        inv_t2 = inv_t * inv_t
        q = []
        dq = []
        ddq = []
        for i in range(4):
            a0, a1, a2, a3, a4, a5 = c0[i], c1[i], c2[i], c3[i], c4[i], c5[i]
            q.append(a0 + s * (a1 + s * (a2 + s * (a3 + s * (a4 + s * a5)))))
            dq.append(
                (a1 + s * (2.0 * a2 + s * (3.0 * a3 + s * (4.0 * a4 + s * 5.0 * a5))))
                * inv_t
            )
            ddq.append(
                (2.0 * a2 + s * (6.0 * a3 + s * (12.0 * a4 + s * 20.0 * a5))) * inv_t2
            )
        return tuple(q), tuple(dq), tuple(ddq)


def plan_orientation(
    q0: UnitQuaternion,
    w0: Vec3,
    a0: Vec3,
    q1: UnitQuaternion,
    w1: Vec3,
    a1: Vec3,
    duration: float,
) -> QuaternionPolynomial:
    """Quintic orientation plan matching q, omega, omega-dot at both ends.

    The terminal quaternion's sign is flipped if needed (shortest arc), so
    callers never have to pre-align signs.

    Raises:
        ValueError: non-positive duration.
        DegeneratePathError: the raw polynomial norm dips below 0.1 on the
            interval (near-180-degree motions; split them instead).
    """
    if duration <= 0.0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if q0.dot(q1) < 0.0:
        q1 = UnitQuaternion(-q1.w, -q1.x, -q1.y, -q1.z)

    qd0 = _rate_to_quat_derivative(q0, w0)
    qdd0 = _accel_to_quat_second_derivative(q0, w0, a0)
    qd1 = _rate_to_quat_derivative(q1, w1)
    qdd1 = _accel_to_quat_second_derivative(q1, w1, a1)

    t = duration
    p0 = np.array(q0.to_wxyz())
    p1 = np.array(q1.to_wxyz())
    v0 = t * np.array(qd0)
    v1 = t * np.array(qd1)
    acc0 = t * t * np.array(qdd0)
    acc1 = t * t * np.array(qdd1)

    c0 = p0
    c1 = v0
    c2 = 0.5 * acc0
    a_res = p1 - c0 - c1 - c2
    b_res = v1 - c1 - 2.0 * c2
    c_res = acc1 - 2.0 * c2
    c3 = 10.0 * a_res - 4.0 * b_res + 0.5 * c_res
    c4 = -15.0 * a_res + 7.0 * b_res - c_res
    c5 = 6.0 * a_res - 3.0 * b_res + 0.5 * c_res

    coeffs = tuple(tuple(float(v) for v in c) for c in (c0, c1, c2, c3, c4, c5))
    return QuaternionPolynomial(coeffs, duration)


def _rate_to_quat_derivative(
    q: UnitQuaternion, omega: Vec3
) -> tuple[float, float, float, float]:
    d = _raw_multiply((0.0, omega.x, omega.y, omega.z), q.to_wxyz())
    return (0.5 * d[0], 0.5 * d[1], 0.5 * d[2], 0.5 * d[3])


def _accel_to_quat_second_derivative(
    q: UnitQuaternion, omega: Vec3, alpha: Vec3
) -> tuple[float, float, float, float]:
    # q_ddot = 0.5*(0,alpha)(x)q + 0.25*(0,omega)(x)(0,omega)(x)q
    term1 = _raw_multiply((0.0, alpha.x, alpha.y, alpha.z), q.to_wxyz())
    wq = _raw_multiply((0.0, omega.x, omega.y, omega.z), q.to_wxyz())
    term2 = _raw_multiply((0.0, omega.x, omega.y, omega.z), wq)
    return tuple(0.5 * term1[i] + 0.25 * term2[i] for i in range(4))


def sample_orientation(
    poly: QuaternionPolynomial, t: float
) -> tuple[UnitQuaternion, Vec3, Vec3]:
    """Normalized orientation plus analytic omega and omega-dot at time t.

    Includes the normalization-derivative terms, so the rates are those of
    the unit-norm output curve, not of the raw polynomial.  The returned
    quaternion keeps the path's sign (no canonicalization) so consecutive
    samples never flip.
    """
    q_raw, dq_raw, ddq_raw = poly._raw_eval(t)
    n = math.sqrt(sum(v * v for v in q_raw))
    inv_n = 1.0 / n
    u = tuple(v * inv_n for v in q_raw)
    n_dot = sum(a * b for a, b in zip(u, dq_raw))
    u_dot = tuple((d - n_dot * a) * inv_n for d, a in zip(dq_raw, u))
    n_ddot = (
        sum(d * d for d in dq_raw)
        + sum(a * b for a, b in zip(q_raw, ddq_raw))
        - n_dot * n_dot
    ) * inv_n
    u_ddot = tuple(
        (dd - 2.0 * n_dot * ud - n_ddot * a) * inv_n
        for dd, ud, a in zip(ddq_raw, u_dot, u)
    )

    quat = UnitQuaternion(u[0], u[1], u[2], u[3])
    u_conj = (u[0], -u[1], -u[2], -u[3])
    w_prod = _raw_multiply(u_dot, u_conj)
    omega = Vec3(2.0 * w_prod[1], 2.0 * w_prod[2], 2.0 * w_prod[3])
    du_conj = (u_dot[0], -u_dot[1], -u_dot[2], -u_dot[3])
    a_prod1 = _raw_multiply(u_ddot, u_conj)
    a_prod2 = _raw_multiply(u_dot, du_conj)
    alpha = Vec3(
        2.0 * (a_prod1[1] + a_prod2[1]),
        2.0 * (a_prod1[2] + a_prod2[2]),
        2.0 * (a_prod1[3] + a_prod2[3]),
    )
    return quat, omega, alpha


class FaceForwardPlan:
    """Time-indexed orientation aligning the body x-axis with the velocity.

    Roll is resolved by Gram-Schmidt against ``up_hint``; near-stationary
    instants (speed < 0.1 mm/s) hold the most recent valid orientation.
    """

    def __init__(self, trajectory: BezierSpline, up_hint: Vec3, grid: int = 256):
        self._trajectory = trajectory
        self._up = up_hint.normalized()
        total = trajectory.total_duration
        times = [total * k / (grid - 1) for k in range(grid)]
        valid = [
            t for t in times if trajectory.velocity(t).norm() >= _STALL_SPEED
        ]
        if not valid:
            raise ValueError(
                "trajectory has (near-)zero velocity everywhere; "
                "face-forward orientation is undefined"
            )
        self._valid_times = valid

    def __call__(self, t: float) -> UnitQuaternion:
        v = self._trajectory.velocity(t)
        if v.norm() >= _STALL_SPEED:
            return self._frame(v)
        # Hold the last valid sampled orientation (or the first upcoming one
        # when the trajectory starts at rest).
        previous = [tv for tv in self._valid_times if tv <= t]
        anchor = previous[-1] if previous else self._valid_times[0]
        return self._frame(self._trajectory.velocity(anchor))

    def _frame(self, velocity: Vec3) -> UnitQuaternion:
        x_axis = velocity.normalized()
        z_axis = self._orthogonal_up(x_axis)
        y_axis = z_axis.cross(x_axis)
        rows = (
            (x_axis.x, y_axis.x, z_axis.x),
            (x_axis.y, y_axis.y, z_axis.y),
            (x_axis.z, y_axis.z, z_axis.z),
        )
        return UnitQuaternion.from_rotation_matrix(rows)

    def _orthogonal_up(self, x_axis: Vec3) -> Vec3:
        for hint in (self._up, Vec3(0, 0, 1), Vec3(0, 1, 0), Vec3(1, 0, 0)):
            proj = hint - x_axis.scale(hint.dot(x_axis))
            if proj.norm() >= 1e-9:
                return proj.normalized()
        raise ValueError("could not resolve an up direction")  # pragma: no cover


def face_forward_plan(trajectory: BezierSpline, up_hint: Vec3) -> FaceForwardPlan:
    """Build a face-forward orientation function for a positional spline."""
    return FaceForwardPlan(trajectory, up_hint)
