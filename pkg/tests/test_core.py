import math

import numpy as np
import pytest

from freeflyer.core import (
    ActuatorLimits,
    BodyParams,
    UnitQuaternion,
    Vec3,
    Wrench,
    omega_to_quat_derivative,
    quat_derivative_to_omega,
    quat_multiply,
    slerp,
)


def random_unit_quaternion(rng: np.random.Generator) -> UnitQuaternion:
    return UnitQuaternion.from_wxyz(rng.normal(size=4))


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestVec3:
    def test_arithmetic(self):
        a = Vec3(1.0, 2.0, 3.0)
        b = Vec3(-1.0, 0.5, 2.0)
        assert a + b == Vec3(0.0, 2.5, 5.0)
        assert a - b == Vec3(2.0, 1.5, 1.0)
        assert a.scale(2.0) == Vec3(2.0, 4.0, 6.0)
        assert a.dot(b) == pytest.approx(1.0 * -1.0 + 2.0 * 0.5 + 3.0 * 2.0)
        assert Vec3(1, 0, 0).cross(Vec3(0, 1, 0)) == Vec3(0, 0, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Vec3(float("nan"), 0.0, 0.0)
        with pytest.raises(ValueError):
            Vec3(0.0, float("inf"), 0.0)


class TestQuatMultiply:
    def test_identity_times_identity(self):
        q = quat_multiply(UnitQuaternion.identity(), UnitQuaternion.identity())
        assert q == UnitQuaternion.identity()

    def test_inverse_cancellation(self):
        q = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        prod = quat_multiply(q, q.conjugate())
        assert prod.angle_to(UnitQuaternion.identity()) < 1e-12

    def test_compose_30_plus_60_about_z(self):
        # Oracle: compose rotation matrices independently and compare entrywise.
        qa = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.radians(30))
        qb = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.radians(60))
        composed = quat_multiply(qa, qb)
        expected = rot_z(math.radians(30)) @ rot_z(math.radians(60))
        np.testing.assert_allclose(
            np.array(composed.rotation_matrix()), expected, atol=1e-12
        )
        ninety = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.radians(90))
        assert composed.angle_to(ninety) < 1e-12

    def test_associativity(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (random_unit_quaternion(rng) for _ in range(3))
            left = quat_multiply(quat_multiply(a, b), c)
            right = quat_multiply(a, quat_multiply(b, c))
            assert max(
                abs(x - y) for x, y in zip(left.to_wxyz(), right.to_wxyz())
            ) < 1e-12


class TestCanonicalization:
    def test_negation_maps_to_same_representative(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            q = random_unit_quaternion(rng)
            neg = UnitQuaternion(-q.w, -q.x, -q.y, -q.z)
            assert q.canonicalized() == neg.canonicalized()

    def test_tie_break_on_zero_w(self):
        q = UnitQuaternion.from_wxyz((0.0, -1.0, 0.0, 0.0))
        assert q.canonicalized().x == 1.0


class TestQuatDerivativeToOmega:
    def test_stationary(self):
        omega = quat_derivative_to_omega(
            UnitQuaternion.identity(), (0.0, 0.0, 0.0, 0.0)
        )
        assert omega == Vec3.zero()

    def test_unit_spin_about_z(self):
        # q(t) = (cos(t/2), 0, 0, sin(t/2)): rotation about z at 1 rad/s.
        t = 0.7
        q = UnitQuaternion(math.cos(t / 2), 0.0, 0.0, math.sin(t / 2))
        q_dot = (-0.5 * math.sin(t / 2), 0.0, 0.0, 0.5 * math.cos(t / 2))
        omega = quat_derivative_to_omega(q, q_dot)
        assert abs(omega.x) < 1e-15
        assert abs(omega.y) < 1e-15
        assert omega.z == pytest.approx(1.0, abs=1e-12)

    def test_finite_difference_oracle_on_smooth_path(self):
        # Path q(t) = q_fixed (x) exp(theta(t) * axis) has analytic world
        # angular velocity R(q_fixed) @ (theta'(t) * axis).
        rng = np.random.default_rng(3)
        for _ in range(20):
            q_fixed = random_unit_quaternion(rng)
            axis = Vec3(*rng.normal(size=3)).normalized()
            c = rng.normal(size=3)  # theta(t) = c0 + c1 t + c2 t^2

            def theta(t):
                return c[0] + c[1] * t + c[2] * t * t

            def path(t):
                spin = UnitQuaternion.from_axis_angle(axis, theta(t))
                raw = np.array(q_fixed.to_wxyz())
                prod = _raw_mul(raw, np.array(spin.to_wxyz()))
                return prod

            t0 = rng.uniform(0.1, 0.9)
            h = 1e-6
            q_plus, q_minus = path(t0 + h), path(t0 - h)
            q_dot = (q_plus - q_minus) / (2 * h)
            q_t = path(t0)
            q_unit = UnitQuaternion.from_wxyz(q_t)
            omega = quat_derivative_to_omega(q_unit, tuple(q_dot))
            theta_dot = c[1] + 2 * c[2] * t0
            expected = q_fixed.rotate(axis.scale(theta_dot))
            assert (omega - expected).norm() < 1e-4

    def test_round_trip_with_inverse(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            q = random_unit_quaternion(rng)
            omega = Vec3(*rng.normal(scale=2.0, size=3))
            q_dot = omega_to_quat_derivative(q, omega)
            back = quat_derivative_to_omega(q, q_dot)
            assert (back - omega).norm() < 1e-10


def _raw_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    y = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    z = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return np.array([w, x, y, z])


class TestSlerp:
    def test_coincident_endpoints(self):
        rng = np.random.default_rng(2)
        q = random_unit_quaternion(rng)
        assert slerp(q, q, 0.5) == q

    def test_geodesic_midpoint(self):
        ninety = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        mid = slerp(UnitQuaternion.identity(), ninety, 0.5)
        expected = UnitQuaternion.from_axis_angle(Vec3(0, 0, 1), math.pi / 4)
        assert mid.angle_to(expected) < 1e-12

    def test_double_cover_handling(self):
        rng = np.random.default_rng(9)
        q = random_unit_quaternion(rng)
        neg = UnitQuaternion(-q.w, -q.x, -q.y, -q.z)
        for t in (0.0, 0.25, 0.5, 0.9, 1.0):
            out = slerp(q, neg, t)
            assert max(
                abs(a - b) for a, b in zip(out.to_wxyz(), q.to_wxyz())
            ) < 1e-12

    def test_rejects_out_of_range_parameter(self):
        q = UnitQuaternion.identity()
        with pytest.raises(ValueError):
            slerp(q, q, 1.5)


class TestRotate:
    def test_matches_rotation_matrix(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            q = random_unit_quaternion(rng)
            v = Vec3(*rng.normal(size=3))
            direct = q.rotate(v)
            via_matrix = np.array(q.rotation_matrix()) @ np.array(v.to_tuple())
            assert np.allclose(direct.to_tuple(), via_matrix, atol=1e-12)

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            q = random_unit_quaternion(rng).canonicalized()
            back = UnitQuaternion.from_rotation_matrix(q.rotation_matrix())
            assert q.angle_to(back) < 1e-7


class TestValidation:
    def test_quaternion_rejects_non_unit(self):
        with pytest.raises(ValueError):
            UnitQuaternion(1.0, 1.0, 0.0, 0.0)

    def test_actuator_limits_positive(self):
        with pytest.raises(ValueError):
            ActuatorLimits(0.0, 1.0, 1.0, 1.0, 1.0)

    def test_body_params_positive(self):
        with pytest.raises(ValueError):
            BodyParams(mass=-1.0, inertia_diagonal=Vec3(1, 1, 1), collision_radius=0.1)
        with pytest.raises(ValueError):
            BodyParams(mass=1.0, inertia_diagonal=Vec3(1, 0, 1), collision_radius=0.1)

    def test_wrench_saturation(self):
        limits = ActuatorLimits(1.0, 0.5, 1.0, 1.0, 1.0)
        w = Wrench(Vec3(3.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0)).saturated(limits)
        assert w.force.norm() == pytest.approx(1.0)
        assert w.torque.norm() == pytest.approx(0.5)
        # Direction is preserved by norm scaling.
        assert w.force.y == 0.0 and w.force.z == 0.0
