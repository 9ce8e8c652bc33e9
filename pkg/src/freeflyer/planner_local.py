"""Millisecond-scale two-point boundary-value planner.

A single degree-5 Bezier curve is the unique polynomial matching position,
velocity, and acceleration at both ends, so the control points follow in
closed form from the Hermite data -- no inner optimization, which is what
keeps this planner in the millisecond class.  Orientation boundary
conditions are handled by a quaternion quintic.  Corridor containment and
actuator limits are deliberately NOT checked here; the receding-horizon
controller scores those instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bezier import BezierCurve
from .core import ActuatorLimits, RigidState, UnitQuaternion, Vec3
from .orientation import QuaternionPolynomial, plan_orientation, sample_orientation

__all__ = ["MotionState", "LocalPlan", "plan_local", "choose_duration", "NoFeasibleDurationError"]

_MIN_DURATION = 0.5
_GRID_GROWTH = 1.5
_MAX_GRID_STEPS = 12


class NoFeasibleDurationError(RuntimeError):
    """No duration on the search grid satisfied the derivative limits."""


@dataclass(frozen=True, slots=True)
class MotionState:
    """Full kinematic boundary data: pose, twist, and accelerations."""

    state: RigidState
    linear_acceleration: Vec3 = field(default_factory=Vec3.zero)
    angular_acceleration: Vec3 = field(default_factory=Vec3.zero)

    @classmethod
    def at_rest(cls, position: Vec3, orientation: UnitQuaternion | None = None) -> MotionState:
        return cls(RigidState.at_rest(position, orientation))


@dataclass(frozen=True)
class LocalPlan:
    """Degree-5 positional curve plus quaternion quintic over one duration."""

    curve: BezierCurve
    orientation: QuaternionPolynomial
    duration: float

    def position(self, t: float) -> Vec3:
        return self.curve.evaluate(t)

    def velocity(self, t: float) -> Vec3:
        return self.curve.velocity(t)

    def acceleration(self, t: float) -> Vec3:
        return self.curve.acceleration(t)

    def attitude(self, t: float) -> tuple[UnitQuaternion, Vec3, Vec3]:
        return sample_orientation(self.orientation, t)


def plan_local(start: MotionState, end: MotionState, duration: float) -> LocalPlan:
    """Two-point boundary-value plan over a fixed duration.

    Boundary position/velocity/acceleration are met exactly (closed-form
    control points); orientation, angular rate, and angular acceleration
    are met by the quaternion quintic.  Deterministic: identical inputs
    produce bit-identical plans.
    """
    if duration <= 0.0:
        raise ValueError(f"duration must be > 0, got {duration}")
    t = duration
    s0, s1 = start.state, end.state
    p0 = s0.position
    p5 = s1.position
    p1 = p0 + s0.linear_velocity.scale(t / 5.0)
    p2 = p1.scale(2.0) - p0 + start.linear_acceleration.scale(t * t / 20.0)
    p4 = p5 - s1.linear_velocity.scale(t / 5.0)
    p3 = p4.scale(2.0) - p5 + end.linear_acceleration.scale(t * t / 20.0)
    curve = BezierCurve((p0, p1, p2, p3, p4, p5), t)
    attitude = plan_orientation(
        s0.orientation,
        s0.angular_velocity,
        start.angular_acceleration,
        s1.orientation,
        s1.angular_velocity,
        end.angular_acceleration,
        t,
    )
    return LocalPlan(curve, attitude, t)


def _limits_certified(plan: LocalPlan, limits: ActuatorLimits) -> bool:
    """Hodograph control-point check (conservative, componentwise)."""
    vel = plan.curve.derivative()
    for p in vel.control_points:
        if max(abs(p.x), abs(p.y), abs(p.z)) > limits.max_velocity:
            return False
    acc = vel.derivative()
    for p in acc.control_points:
        if max(abs(p.x), abs(p.y), abs(p.z)) > limits.max_acceleration:
            return False
    return True


def choose_duration(start: MotionState, end: MotionState, limits: ActuatorLimits) -> float:
    """Smallest grid duration whose plan passes the hodograph limit check.

    The grid is t0 * 1.5^k for k = 0..12 with t0 = distance / max_velocity
    clamped to at least 0.5 s.
    """
    distance = (end.state.position - start.state.position).norm()
    t0 = max(_MIN_DURATION, distance / limits.max_velocity)
    duration = t0
    for _ in range(_MAX_GRID_STEPS + 1):
        plan = plan_local(start, end, duration)
        if _limits_certified(plan, limits):
            return duration
        duration *= _GRID_GROWTH
    raise NoFeasibleDurationError(
        f"no feasible duration up to {duration / _GRID_GROWTH:.3g} s "
        f"(grid start {t0:.3g} s, {_MAX_GRID_STEPS} growth steps)"
    )
