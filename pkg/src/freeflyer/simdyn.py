"""Reduced-order forward dynamics for the free-flyer and its cargo.

The robot is a rigid body under a saturated wrench; cargo is one of three
reduced-order bag models built from a single spring-damper coupling
primitive acting between a grip point on each body (linear part) and on
their relative orientation via the rotation-vector error (angular part):

- ``constraint``:  one bag body coupled to the robot's grip point.
- ``composite``:   a handle block coupled to the robot, two half-bag bodies
                   coupled to the handle.
- ``articulated``: a short handle link coupled to the robot, joined to the
                   bag body by a stiff point-hinge spring (an approximation
                   that cannot reflect large handle deformations).

Integration is semi-implicit Euler (velocity first, then position; the
quaternion advances by the exponential map of omega*dt and is renormalized).
Microgravity: there is no gravitational term anywhere.  Collisions with the
corridor are detected and reported, never resolved -- avoiding them is the
controller's job.

States are immutable values, so snapshot/restore is exact by construction
and rollout workers can branch freely without locks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import (
    ActuatorLimits,
    BodyParams,
    RigidState,
    UnitQuaternion,
    Vec3,
    Wrench,
    quat_multiply,
)
from .corridor import Corridor

__all__ = [
    "AttachmentParams",
    "CargoModel",
    "SimState",
    "Snapshot",
    "CollisionReport",
    "Simulator",
    "AttachmentDegeneracyError",
]

_MAX_DT = 0.05
# Reject spring/step combinations beyond a fifth of the period bound
# dt < 2/omega_n; i.e. require dt <= 0.2 * 2*pi / omega_n.
_STABILITY_FRACTION = 0.2
# Rotation-vector angular error is ill-conditioned approaching pi.
_MAX_RELATIVE_ANGLE = math.pi - 0.1


class AttachmentDegeneracyError(RuntimeError):
    """Relative orientation across a coupling approached 180 degrees."""


@dataclass(frozen=True, slots=True)
class AttachmentParams:
    """Spring-damper coupling between two bodies.

    ``grip_point_robot`` is the attach point in the parent body's frame and
    ``grip_point_bag`` in the child's frame (for inter-body couplings the
    "robot" side is simply the parent).  The coupling is at rest when the
    two points coincide and the orientations agree.
    """

    linear_stiffness: float
    linear_damping: float
    angular_stiffness: float
    angular_damping: float
    grip_point_robot: Vec3
    grip_point_bag: Vec3
    breaking_force: float = math.inf

    def __post_init__(self) -> None:
        for name in (
            "linear_stiffness",
            "linear_damping",
            "angular_stiffness",
            "angular_damping",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not self.breaking_force > 0.0:
            raise ValueError("breaking_force must be positive (inf allowed)")


_VARIANTS = ("none", "constraint", "composite", "articulated")


@dataclass(frozen=True)
class CargoModel:
    """Cargo variant selector plus the physical parameters it needs.

    Composite bags get ``composite_offsets`` (half-bag centers in the handle
    frame) and an inter-body coupling; articulated bags get a hinge coupling
    joining the handle link to the bag body.  Mass splits between sub-bodies
    are fixed fractions of ``bag_params.mass`` (handle/link 20 percent).
    """

    variant: str
    bag_params: BodyParams | None = None
    attachment: AttachmentParams | None = None
    composite_offsets: tuple[Vec3, ...] = ()
    composite_stiffness: float = 500.0
    composite_damping: float = 5.0
    hinge_stiffness: float = 2000.0
    hinge_damping: float = 20.0
    hinge_angular_stiffness: float = 20.0
    hinge_angular_damping: float = 0.2
    hinge_offset: Vec3 = field(default_factory=lambda: Vec3(0.1, 0.0, 0.0))

    def __post_init__(self) -> None:
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown cargo variant {self.variant!r}; expected one of {_VARIANTS}")
        if self.variant == "none":
            return
        if self.bag_params is None or self.attachment is None:
            raise ValueError(f"variant {self.variant!r} requires bag_params and attachment")
        if self.variant == "composite" and len(self.composite_offsets) < 2:
            raise ValueError("composite variant requires at least two body offsets")

    @classmethod
    def none(cls) -> CargoModel:
        return cls(variant="none")


@dataclass(frozen=True, slots=True)
class SimState:
    """Complete simulator state: robot, bag bodies, time, and sticky flags."""

    robot: RigidState
    bag_bodies: tuple[RigidState, ...]
    time: float
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True, slots=True)
class Snapshot:
    """Opaque restore point; states are values, so the copy is the state."""

    state: SimState


@dataclass(frozen=True, slots=True)
class CollisionReport:
    """Per-body corridor margins with the collision radius subtracted."""

    robot_margin: float
    bag_margins: tuple[float, ...]

    @property
    def min_margin(self) -> float:
        return min((self.robot_margin, *self.bag_margins))

    @property
    def any_collision(self) -> bool:
        return self.min_margin < 0.0

    @property
    def collision_flags(self) -> tuple[bool, ...]:
        return tuple(m < 0.0 for m in (self.robot_margin, *self.bag_margins))


@dataclass(frozen=True, slots=True)
class _Coupling:
    parent: int
    child: int
    params: AttachmentParams
    flag: str  # sticky flag name once broken


def _scaled_body(params: BodyParams, mass_fraction: float, radius_scale: float = 1.0) -> BodyParams:
    return BodyParams(
        mass=params.mass * mass_fraction,
        inertia_diagonal=params.inertia_diagonal.scale(mass_fraction),
        collision_radius=params.collision_radius * radius_scale,
    )


class Simulator:
    """Forward dynamics with a fixed cargo model and actuator limits.

    The constructor rejects (stiffness, dt) pairs outside the semi-implicit
    stability budget.  ``step`` is a pure function of the state, so multiple
    rollout workers can share one Simulator instance.
    """

    def __init__(
        self,
        robot: BodyParams,
        limits: ActuatorLimits,
        cargo: CargoModel,
        dt: float = 0.005,
    ):
        if not 0.0 < dt <= _MAX_DT:
            raise ValueError(f"dt must be in (0, {_MAX_DT}], got {dt}")
        self.robot_params = robot
        self.limits = limits
        self.cargo = cargo
        self.dt = dt
        self._bodies, self._couplings = self._build(robot, cargo)
        self._check_stability(dt)

    @staticmethod
    def _build(
        robot: BodyParams, cargo: CargoModel
    ) -> tuple[list[BodyParams], list[_Coupling]]:
        bodies = [robot]
        couplings: list[_Coupling] = []
        if cargo.variant == "none":
            return bodies, couplings
        bag = cargo.bag_params
        attach = cargo.attachment
        assert bag is not None and attach is not None
        if cargo.variant == "constraint":
            bodies.append(bag)
            couplings.append(_Coupling(0, 1, attach, "attachment_broken"))
        elif cargo.variant == "composite":
            n_halves = len(cargo.composite_offsets)
            bodies.append(_scaled_body(bag, 0.2, radius_scale=0.4))  # handle block
            half_fraction = 0.8 / n_halves
            for off in cargo.composite_offsets:
                bodies.append(_scaled_body(bag, half_fraction))
            couplings.append(_Coupling(0, 1, attach, "attachment_broken"))
            for i, off in enumerate(cargo.composite_offsets):
                inner = AttachmentParams(
                    linear_stiffness=cargo.composite_stiffness,
                    linear_damping=cargo.composite_damping,
                    angular_stiffness=cargo.composite_stiffness * 0.01,
                    angular_damping=cargo.composite_damping * 0.01,
                    grip_point_robot=off,
                    grip_point_bag=Vec3.zero(),
                )
                couplings.append(_Coupling(1, 2 + i, inner, f"composite_link_{i}_broken"))
        else:  # articulated
            bodies.append(_scaled_body(bag, 0.2, radius_scale=0.4))  # handle link
            bodies.append(_scaled_body(bag, 0.8))
            couplings.append(_Coupling(0, 1, attach, "attachment_broken"))
            hinge = AttachmentParams(
                linear_stiffness=cargo.hinge_stiffness,
                linear_damping=cargo.hinge_damping,
                angular_stiffness=cargo.hinge_angular_stiffness,
                angular_damping=cargo.hinge_angular_damping,
                grip_point_robot=cargo.hinge_offset,
                grip_point_bag=-cargo.hinge_offset,
            )
            couplings.append(_Coupling(1, 2, hinge, "hinge_broken"))
        return bodies, couplings

    def _check_stability(self, dt: float) -> None:
        for c in self._couplings:
            ma = self._bodies[c.parent].mass
            mb = self._bodies[c.child].mass
            m_red = 1.0 / (1.0 / ma + 1.0 / mb)
            if c.params.linear_stiffness > 0.0:
                omega_n = math.sqrt(c.params.linear_stiffness / m_red)
                bound = _STABILITY_FRACTION * 2.0 * math.pi / omega_n
                if dt > bound:
                    raise ValueError(
                        f"dt={dt} exceeds the stability budget {bound:.4g} s for a "
                        f"{c.params.linear_stiffness} N/m coupling "
                        f"(require dt <= 0.2 * 2*pi/omega_n)"
                    )
            if c.params.angular_stiffness > 0.0:
                ia = self._bodies[c.parent].inertia_diagonal
                ib = self._bodies[c.child].inertia_diagonal
                i_red = 1.0 / (1.0 / min(ia.to_tuple()) + 1.0 / min(ib.to_tuple()))
                omega_n = math.sqrt(c.params.angular_stiffness / i_red)
                bound = _STABILITY_FRACTION * 2.0 * math.pi / omega_n
                if dt > bound:
                    raise ValueError(
                        f"dt={dt} exceeds the stability budget {bound:.4g} s for a "
                        f"{c.params.angular_stiffness} N*m/rad angular coupling"
                    )

    @property
    def body_params(self) -> tuple[BodyParams, ...]:
        """Robot followed by bag-body parameters."""
        return tuple(self._bodies)

    def initial_state(self, robot: RigidState, start_time: float = 0.0) -> SimState:
        """Place every bag body at its coupling-neutral pose and twist."""
        states = [robot]
        for c in self._couplings:
            parent = states[c.parent]
            rp = parent.orientation.rotate(c.params.grip_point_robot)
            rb = parent.orientation.rotate(c.params.grip_point_bag)
            pos = parent.position + rp - rb
            vel = parent.linear_velocity + parent.angular_velocity.cross(
                pos - parent.position
            )
            states.append(
                RigidState(pos, parent.orientation, vel, parent.angular_velocity)
            )
        return SimState(robot=states[0], bag_bodies=tuple(states[1:]), time=start_time)

    # -- forward dynamics ---------------------------------------------------

    def step(self, state: SimState, wrench: Wrench, dt: float | None = None) -> SimState:
        """Advance one step under the (saturated) commanded wrench."""
        h = self.dt if dt is None else dt
        if not 0.0 < h <= _MAX_DT:
            raise ValueError(f"dt must be in (0, {_MAX_DT}], got {h}")
        if len(state.bag_bodies) != len(self._bodies) - 1:
            raise ValueError(
                f"state has {len(state.bag_bodies)} bag bodies, model expects "
                f"{len(self._bodies) - 1}"
            )
        u = wrench.saturated(self.limits)

        bodies = [state.robot, *state.bag_bodies]
        forces = [Vec3.zero() for _ in bodies]
        torques = [Vec3.zero() for _ in bodies]
        forces[0] = u.force
        torques[0] = u.torque
        flags = state.flags

        for c in self._couplings:
            if c.flag in flags:
                continue
            a, b = bodies[c.parent], bodies[c.child]
            p = c.params
            off_a = a.orientation.rotate(p.grip_point_robot)
            off_b = b.orientation.rotate(p.grip_point_bag)
            delta = (a.position + off_a) - (b.position + off_b)
            delta_v = (a.linear_velocity + a.angular_velocity.cross(off_a)) - (
                b.linear_velocity + b.angular_velocity.cross(off_b)
            )
            force_on_child = delta.scale(p.linear_stiffness) + delta_v.scale(
                p.linear_damping
            )
            if force_on_child.norm() > p.breaking_force:
                flags = flags | {c.flag}
                continue
            forces[c.child] = forces[c.child] + force_on_child
            forces[c.parent] = forces[c.parent] - force_on_child
            torques[c.child] = torques[c.child] + off_b.cross(force_on_child)
            torques[c.parent] = torques[c.parent] - off_a.cross(force_on_child)

            q_rel = quat_multiply(b.orientation, a.orientation.conjugate())
            err = q_rel.rotation_vector()
            if err.norm() >= _MAX_RELATIVE_ANGLE:
                raise AttachmentDegeneracyError(
                    f"relative angle {err.norm():.3f} rad across coupling "
                    f"{c.parent}-{c.child} is too close to pi"
                )
            torque_on_child = err.scale(-p.angular_stiffness) + (
                b.angular_velocity - a.angular_velocity
            ).scale(-p.angular_damping)
            torques[c.child] = torques[c.child] + torque_on_child
            torques[c.parent] = torques[c.parent] - torque_on_child

        new_bodies = [
            self._integrate(bodies[i], self._bodies[i], forces[i], torques[i], h)
            for i in range(len(bodies))
        ]
        return SimState(
            robot=new_bodies[0],
            bag_bodies=tuple(new_bodies[1:]),
            time=state.time + h,
            flags=flags,
        )

    @staticmethod
    def _integrate(
        body: RigidState, params: BodyParams, force: Vec3, torque: Vec3, h: float
    ) -> RigidState:
        inv_m = 1.0 / params.mass
        v = body.linear_velocity + force.scale(h * inv_m)
        inertia = params.inertia_diagonal
        w = body.angular_velocity + Vec3(
            torque.x / inertia.x, torque.y / inertia.y, torque.z / inertia.z
        ).scale(h)
        p = body.position + v.scale(h)
        if w.x == 0.0 and w.y == 0.0 and w.z == 0.0:
            q = body.orientation
        else:
            q = quat_multiply(
                UnitQuaternion.from_rotation_vector(w.scale(h)), body.orientation
            )
        return RigidState(p, q, v, w)

    # -- rollout support ------------------------------------------------------

    @staticmethod
    def snapshot(state: SimState) -> Snapshot:
        return Snapshot(state)

    @staticmethod
    def restore(snapshot: Snapshot) -> SimState:
        return snapshot.state

    # -- diagnostics ----------------------------------------------------------

    def collision_report(self, state: SimState, corridor: Corridor) -> CollisionReport:
        robot_margin = (
            corridor.safety_margin(state.robot.position)
            - self.robot_params.collision_radius
        )
        bag_margins = tuple(
            corridor.safety_margin(body.position) - self._bodies[i + 1].collision_radius
            for i, body in enumerate(state.bag_bodies)
        )
        return CollisionReport(robot_margin, bag_margins)

    def mechanical_energy(self, state: SimState) -> float:
        """Kinetic plus coupling-spring potential energy (diagnostics/tests)."""
        total = 0.0
        bodies = [state.robot, *state.bag_bodies]
        for body, params in zip(bodies, self._bodies):
            v2 = body.linear_velocity.dot(body.linear_velocity)
            w = body.angular_velocity
            inertia = params.inertia_diagonal
            total += 0.5 * params.mass * v2
            total += 0.5 * (inertia.x * w.x**2 + inertia.y * w.y**2 + inertia.z * w.z**2)
        for c in self._couplings:
            if c.flag in state.flags:
                continue
            a, b = bodies[c.parent], bodies[c.child]
            off_a = a.orientation.rotate(c.params.grip_point_robot)
            off_b = b.orientation.rotate(c.params.grip_point_bag)
            delta = (a.position + off_a) - (b.position + off_b)
            total += 0.5 * c.params.linear_stiffness * delta.dot(delta)
            err = quat_multiply(b.orientation, a.orientation.conjugate()).rotation_vector()
            total += 0.5 * c.params.angular_stiffness * err.dot(err)
        return total

    def total_linear_momentum(self, state: SimState) -> Vec3:
        bodies = [state.robot, *state.bag_bodies]
        mom = Vec3.zero()
        for body, params in zip(bodies, self._bodies):
            mom = mom + body.linear_velocity.scale(params.mass)
        return mom
