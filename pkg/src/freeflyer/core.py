"""Shared domain types and quaternion algebra for the free-flyer stack.

Conventions used throughout the package:

- Quaternions are stored scalar-first as (w, x, y, z); the canonical sign
  convention is w >= 0 (ties broken toward x >= 0, then y, then z).
- Angular velocities are world-frame 3-vectors in rad/s, related to the
  quaternion rate by ``q_dot = 0.5 * (0, omega) (x) q``.
- Everything is SI: meters, seconds, kilograms, newtons.
- All types in this module are immutable values and safe to share between
  concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Vec3",
    "UnitQuaternion",
    "RigidState",
    "Wrench",
    "ActuatorLimits",
    "BodyParams",
    "quat_multiply",
    "quat_derivative_to_omega",
    "omega_to_quat_derivative",
    "slerp",
    "DEFAULT_ROBOT_PARAMS",
    "DEFAULT_ACTUATOR_LIMITS",
]


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {values}")


@dataclass(frozen=True, slots=True)
class Vec3:
    """A 3-vector of finite reals (meters, m/s, N, ... depending on context)."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        x, y, z = self.x, self.y, self.z
        # Fast path for float inputs: Vec3 construction sits inside every
        # simulator step and curve evaluation.
        if not (type(x) is float and type(y) is float and type(z) is float):
            x, y, z = float(x), float(y), float(z)
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "y", y)
            object.__setattr__(self, "z", z)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise ValueError(f"Vec3 components must be finite, got {(x, y, z)}")

    @classmethod
    def zero(cls) -> Vec3:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_iter(cls, values: Iterable[float]) -> Vec3:
        vals = list(values)
        if len(vals) != 3:
            raise ValueError(f"expected 3 components, got {len(vals)}")
        return cls(vals[0], vals[1], vals[2])

    def to_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, s: float) -> Vec3:
        return Vec3(self.x * s, self.y * s, self.z * s)

    def __mul__(self, s: float) -> Vec3:
        return self.scale(s)

    def __rmul__(self, s: float) -> Vec3:
        return self.scale(s)

    def dot(self, other: Vec3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: Vec3) -> Vec3:
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> Vec3:
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return self.scale(1.0 / n)


@dataclass(frozen=True, slots=True)
class UnitQuaternion:
    """Unit quaternion (w, x, y, z) representing a rotation.

    q and -q represent the same rotation; operations documented as
    "canonicalized" return the representative with w >= 0 (ties broken
    lexicographically toward positive x, y, z).  Constructors validate
    the norm to within 1e-9 but preserve the caller's sign, because
    sampled orientation paths rely on sign continuity.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        w, x, y, z = self.w, self.x, self.y, self.z
        if not (
            type(w) is float and type(x) is float and type(y) is float and type(z) is float
        ):
            w, x, y, z = float(w), float(x), float(y), float(z)
            object.__setattr__(self, "w", w)
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "y", y)
            object.__setattr__(self, "z", z)
        n_sq = w * w + x * x + y * y + z * z
        # |n^2 - 1| <= 2e-9 is the first-order image of |n - 1| <= 1e-9;
        # NaN/inf inputs fail this window too.
        if not abs(n_sq - 1.0) <= 2e-9:
            n = math.sqrt(n_sq) if math.isfinite(n_sq) else n_sq
            raise ValueError(f"quaternion norm {n} deviates from 1 by more than 1e-9")

    @classmethod
    def identity(cls) -> UnitQuaternion:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_wxyz(cls, values: Sequence[float]) -> UnitQuaternion:
        w, x, y, z = values
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n < 1e-12:
            raise ValueError("cannot normalize a near-zero quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_axis_angle(cls, axis: Vec3, angle: float) -> UnitQuaternion:
        a = axis.normalized()
        half = 0.5 * angle
        s = math.sin(half)
        return cls.from_wxyz((math.cos(half), a.x * s, a.y * s, a.z * s))

    @classmethod
    def from_rotation_vector(cls, rv: Vec3) -> UnitQuaternion:
        """Exponential map: rotation by |rv| radians about rv's direction."""
        angle = rv.norm()
        if angle < 1e-12:
            # First-order expansion keeps the map smooth through zero.
            return cls.from_wxyz((1.0, 0.5 * rv.x, 0.5 * rv.y, 0.5 * rv.z))
        return cls.from_axis_angle(rv, angle)

    @classmethod
    def from_rotation_matrix(cls, rows: Sequence[Sequence[float]]) -> UnitQuaternion:
        """Shepperd's method; result is canonicalized."""
        r00, r01, r02 = rows[0]
        r10, r11, r12 = rows[1]
        r20, r21, r22 = rows[2]
        trace = r00 + r11 + r22
        if trace > 0.0:
            s = math.sqrt(trace + 1.0) * 2.0
            q = (0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s)
        elif r00 > r11 and r00 > r22:
            s = math.sqrt(1.0 + r00 - r11 - r22) * 2.0
            q = ((r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s)
        elif r11 > r22:
            s = math.sqrt(1.0 + r11 - r00 - r22) * 2.0
            q = ((r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s)
        else:
            s = math.sqrt(1.0 + r22 - r00 - r11) * 2.0
            q = ((r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s)
        return cls.from_wxyz(q).canonicalized()

    def to_wxyz(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def conjugate(self) -> UnitQuaternion:
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def canonicalized(self) -> UnitQuaternion:
        """Return the sign representative with w >= 0 (lexicographic ties)."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0.0:
                return self
            if c < 0.0:
                return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def dot(self, other: UnitQuaternion) -> float:
        return (
            self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
        )

    def rotate(self, v: Vec3) -> Vec3:
        """Rotate a world vector by this quaternion (active rotation)."""
        qv = Vec3(self.x, self.y, self.z)
        t = qv.cross(v).scale(2.0)
        return v + t.scale(self.w) + qv.cross(t)

    def rotation_matrix(self) -> tuple[tuple[float, float, float], ...]:
        w, x, y, z = self.w, self.x, self.y, self.z
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        return (
            (1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)),
            (2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)),
            (2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)),
        )

    def rotation_vector(self) -> Vec3:
        """Log map: axis * angle, with angle in [0, pi]."""
        q = self.canonicalized()
        vec_norm = math.sqrt(q.x**2 + q.y**2 + q.z**2)
        if vec_norm < 1e-12:
            # Small-angle limit of 2*asin(|v|)/|v|.
            return Vec3(2.0 * q.x, 2.0 * q.y, 2.0 * q.z)
        angle = 2.0 * math.atan2(vec_norm, q.w)
        s = angle / vec_norm
        return Vec3(q.x * s, q.y * s, q.z * s)

    def angle_to(self, other: UnitQuaternion) -> float:
        """Geodesic angle in radians between two orientations.

        atan2-based, so small angles are computed to machine precision
        (acos of the dot product loses half the significant digits there).
        """
        rel = _raw_multiply(self.to_wxyz(), other.conjugate().to_wxyz())
        vec_norm = math.sqrt(rel[1] ** 2 + rel[2] ** 2 + rel[3] ** 2)
        return 2.0 * math.atan2(vec_norm, abs(rel[0]))


def quat_multiply(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product a (x) b, renormalized and canonicalized."""
    w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z
    x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y
    y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x
    z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w
    return UnitQuaternion.from_wxyz((w, x, y, z)).canonicalized()


def _raw_multiply(
    a: Sequence[float], b: Sequence[float]
) -> tuple[float, float, float, float]:
    """Hamilton product of two raw 4-vectors, no normalization."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_derivative_to_omega(q: UnitQuaternion, q_dot: Sequence[float]) -> Vec3:
    """World-frame angular velocity from a quaternion rate.

    Uses the kinematic relation omega = 2 * (q_dot (x) q^-1), taking the
    vector part.  ``q_dot`` is a raw 4-sequence in (w, x, y, z) order.
    """
    prod = _raw_multiply(q_dot, q.conjugate().to_wxyz())
    return Vec3(2.0 * prod[1], 2.0 * prod[2], 2.0 * prod[3])


def omega_to_quat_derivative(
    q: UnitQuaternion, omega: Vec3
) -> tuple[float, float, float, float]:
    """Inverse of :func:`quat_derivative_to_omega`: q_dot = 0.5*(0,omega)(x)q."""
    prod = _raw_multiply((0.0, omega.x, omega.y, omega.z), q.to_wxyz())
    return (0.5 * prod[0], 0.5 * prod[1], 0.5 * prod[2], 0.5 * prod[3])


def slerp(a: UnitQuaternion, b: UnitQuaternion, t: float) -> UnitQuaternion:
    """Geodesic interpolation with shortest-arc sign handling.

    The result's sign follows ``a``, so sampling along t produces a
    sign-continuous path (no canonicalization is applied).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"slerp parameter t={t} outside [0, 1]")
    bw, bx, by, bz = b.to_wxyz()
    d = a.dot(b)
    if d < 0.0:
        d = -d
        bw, bx, by, bz = -bw, -bx, -by, -bz
    if d > 1.0 - 1e-12:
        # Nearly coincident: linear blend, renormalized.
        return UnitQuaternion.from_wxyz(
            (
                a.w + t * (bw - a.w),
                a.x + t * (bx - a.x),
                a.y + t * (by - a.y),
                a.z + t * (bz - a.z),
            )
        )
    theta = math.acos(min(1.0, d))
    sin_theta = math.sin(theta)
    ka = math.sin((1.0 - t) * theta) / sin_theta
    kb = math.sin(t * theta) / sin_theta
    return UnitQuaternion.from_wxyz(
        (
            ka * a.w + kb * bw,
            ka * a.x + kb * bx,
            ka * a.y + kb * by,
            ka * a.z + kb * bz,
        )
    )


@dataclass(frozen=True, slots=True)
class RigidState:
    """Pose and twist of a free-flying rigid body.

    ``angular_velocity`` is expressed in the world frame (see module notes).
    """

    position: Vec3
    orientation: UnitQuaternion
    linear_velocity: Vec3
    angular_velocity: Vec3

    @classmethod
    def at_rest(
        cls, position: Vec3, orientation: UnitQuaternion | None = None
    ) -> RigidState:
        return cls(
            position=position,
            orientation=orientation or UnitQuaternion.identity(),
            linear_velocity=Vec3.zero(),
            angular_velocity=Vec3.zero(),
        )


@dataclass(frozen=True, slots=True)
class ActuatorLimits:
    """Actuation and flight-profile limits, all strictly positive."""

    max_force: float
    max_torque: float
    max_velocity: float
    max_acceleration: float
    max_angular_velocity: float

    def __post_init__(self) -> None:
        for name in (
            "max_force",
            "max_torque",
            "max_velocity",
            "max_acceleration",
            "max_angular_velocity",
        ):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v}")


@dataclass(frozen=True, slots=True)
class Wrench:
    """World-frame force (N) and torque (N*m)."""

    force: Vec3
    torque: Vec3

    @classmethod
    def zero(cls) -> Wrench:
        return cls(Vec3.zero(), Vec3.zero())

    def saturated(self, limits: ActuatorLimits) -> Wrench:
        """Scale force and torque norms down to the actuator limits."""
        force = self.force
        fn = force.norm()
        if fn > limits.max_force:
            force = force.scale(limits.max_force / fn)
        torque = self.torque
        tn = torque.norm()
        if tn > limits.max_torque:
            torque = torque.scale(limits.max_torque / tn)
        return Wrench(force, torque)


@dataclass(frozen=True, slots=True)
class BodyParams:
    """Mass properties and a conservative collision-sphere radius."""

    mass: float
    inertia_diagonal: Vec3
    collision_radius: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mass) and self.mass > 0.0):
            raise ValueError(f"mass must be > 0, got {self.mass}")
        d = self.inertia_diagonal
        if min(d.x, d.y, d.z) <= 0.0:
            raise ValueError(f"inertia diagonal must be > 0, got {d}")
        if not (math.isfinite(self.collision_radius) and self.collision_radius > 0.0):
            raise ValueError(
                f"collision_radius must be > 0, got {self.collision_radius}"
            )


# Configurable defaults; every experiment reads the actual values from its
# scenario file.
DEFAULT_ROBOT_PARAMS = BodyParams(
    mass=9.58,
    inertia_diagonal=Vec3(0.153, 0.143, 0.162),
    collision_radius=0.26,
)

DEFAULT_ACTUATOR_LIMITS = ActuatorLimits(
    max_force=0.85,
    max_torque=0.085,
    max_velocity=0.5,
    max_acceleration=0.1,
    max_angular_velocity=0.45,
)
