"""Bezier curve primitive: evaluation, hodographs, hull bounds, jerk energy.

Curves are parameterized on [0, 1] internally and scaled by their duration,
so all public operations take wall-clock time t in [0, duration].  The
convex-hull property (a curve lies inside the hull of its control points)
is what turns control-point constraints into curve-containment and
derivative-limit certificates for the planners; de Casteljau subdivision
tightens those certificates while staying linear in the control points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .core import Vec3
from .corridor import Aabb

__all__ = [
    "BezierCurve",
    "BezierSpline",
    "jerk_energy_matrix",
    "hodograph_matrix",
    "restriction_matrix",
    "subdivision_matrices",
    "subdivided_max_abs",
]

_DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class BezierCurve:
    """Bezier curve with at least two control points and positive duration."""

    control_points: tuple[Vec3, ...]
    duration: float

    def __post_init__(self) -> None:
        pts = tuple(self.control_points)
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "duration", float(self.duration))
        if len(pts) < 2:
            raise ValueError("BezierCurve requires at least 2 control points")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"duration must be > 0, got {self.duration}")

    @classmethod
    def from_array(cls, points: np.ndarray, duration: float) -> BezierCurve:
        return cls(
            tuple(Vec3(float(p[0]), float(p[1]), float(p[2])) for p in points),
            duration,
        )

    @property
    def degree(self) -> int:
        return len(self.control_points) - 1

    def points_array(self) -> np.ndarray:
        """Control points as an (n+1, 3) float array (fresh copy)."""
        return np.array([p.to_tuple() for p in self.control_points])

    def _local_parameter(self, t: float) -> float:
        s = t / self.duration
        if s < 0.0 or s > 1.0:
            # Tolerate junction-time roundoff, reject genuine range errors.
            if -1e-9 <= s <= 1.0 + 1e-9:
                return min(1.0, max(0.0, s))
            raise ValueError(f"time {t} outside [0, {self.duration}]")
        return s

    def evaluate(self, t: float) -> Vec3:
        """Curve point at wall-clock time t via de Casteljau recursion."""
        s = self._local_parameter(t)
        pts = [p.to_tuple() for p in self.control_points]
        n = len(pts)
        c = 1.0 - s
        for level in range(1, n):
            for i in range(n - level):
                a, b = pts[i], pts[i + 1]
                pts[i] = (
                    c * a[0] + s * b[0],
                    c * a[1] + s * b[1],
                    c * a[2] + s * b[2],
                )
        return Vec3(*pts[0])

    @cached_property
    def _hodograph(self) -> BezierCurve:
        n = self.degree
        scale = n / self.duration
        pts = self.control_points
        deriv = tuple((pts[i + 1] - pts[i]).scale(scale) for i in range(n))
        if len(deriv) == 1:
            # Constant hodograph: pad to the 2-point minimum (same values).
            deriv = (deriv[0], deriv[0])
        return BezierCurve(deriv, self.duration)

    def derivative(self) -> BezierCurve:
        """Hodograph: one degree lower, evaluates to db/dt (cached)."""
        return self._hodograph

    def velocity(self, t: float) -> Vec3:
        return self._hodograph.evaluate(t)

    def acceleration(self, t: float) -> Vec3:
        return self._hodograph._hodograph.evaluate(t)

    def bounds(self) -> Aabb:
        """AABB of the control points; contains the curve by convexity.

        Degenerate (flat) axes are inflated by a tiny epsilon so the box
        stays a valid Aabb.
        """
        xs = [p.x for p in self.control_points]
        ys = [p.y for p in self.control_points]
        zs = [p.z for p in self.control_points]
        lo = [min(xs), min(ys), min(zs)]
        hi = [max(xs), max(ys), max(zs)]
        for k in range(3):
            if hi[k] - lo[k] < _DEGENERATE_EPS:
                pad = _DEGENERATE_EPS * (1.0 + abs(lo[k]))
                lo[k] -= pad
                hi[k] += pad
        return Aabb(Vec3(*lo), Vec3(*hi))

    def degree_elevate(self, new_degree: int) -> BezierCurve:
        """Same curve values with new_degree + 1 control points."""
        if new_degree < self.degree:
            raise ValueError(
                f"cannot elevate degree {self.degree} curve to lower degree "
                f"{new_degree}"
            )
        pts = list(self.control_points)
        while len(pts) - 1 < new_degree:
            n = len(pts)  # current degree + 1
            raised = [pts[0]]
            for i in range(1, n):
                a = i / n
                raised.append(pts[i - 1].scale(a) + pts[i].scale(1.0 - a))
            raised.append(pts[-1])
            pts = raised
        return BezierCurve(tuple(pts), self.duration)

    def split(self, t: float) -> tuple[BezierCurve, BezierCurve]:
        """Split at wall-clock time t into two curves covering [0,t], [t,T]."""
        s = self._local_parameter(t)
        if s <= 0.0 or s >= 1.0:
            raise ValueError(f"split time {t} must be strictly inside (0, {self.duration})")
        pts = [p for p in self.control_points]
        left = [pts[0]]
        right = [pts[-1]]
        n = len(pts)
        for level in range(1, n):
            for i in range(n - level):
                pts[i] = pts[i].scale(1.0 - s) + pts[i + 1].scale(s)
            left.append(pts[0])
            right.append(pts[n - level - 1])
        right.reverse()
        return (
            BezierCurve(tuple(left), self.duration * s),
            BezierCurve(tuple(right), self.duration * (1.0 - s)),
        )


@dataclass(frozen=True)
class BezierSpline:
    """Piecewise Bezier curve, position-continuous at junctions exactly.

    C0 continuity is structural (shared junction control points); C1/C2
    junction residuals are a planner responsibility and certified there.
    """

    segments: tuple[BezierCurve, ...]

    def __post_init__(self) -> None:
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        if not segments:
            raise ValueError("spline requires at least one segment")
        for k in range(len(segments) - 1):
            if segments[k].control_points[-1] != segments[k + 1].control_points[0]:
                raise ValueError(
                    f"spline junction {k} is not position-continuous: "
                    f"{segments[k].control_points[-1]} != "
                    f"{segments[k + 1].control_points[0]}"
                )

    @cached_property
    def segment_start_times(self) -> tuple[float, ...]:
        starts = [0.0]
        for seg in self.segments[:-1]:
            starts.append(starts[-1] + seg.duration)
        return tuple(starts)

    @property
    def total_duration(self) -> float:
        return self.segment_start_times[-1] + self.segments[-1].duration

    def _locate(self, t: float) -> tuple[BezierCurve, float]:
        total = self.total_duration
        if t < -1e-9 or t > total + 1e-9:
            raise ValueError(f"time {t} outside [0, {total}]")
        t = min(max(t, 0.0), total)
        starts = self.segment_start_times
        # Linear scan is fine: splines have a handful of segments.
        idx = len(starts) - 1
        for k in range(len(starts) - 1):
            if t < starts[k + 1]:
                idx = k
                break
        seg = self.segments[idx]
        local = min(max(t - starts[idx], 0.0), seg.duration)
        return seg, local

    def evaluate(self, t: float) -> Vec3:
        seg, local = self._locate(t)
        return seg.evaluate(local)

    def velocity(self, t: float) -> Vec3:
        seg, local = self._locate(t)
        return seg.velocity(local)

    def acceleration(self, t: float) -> Vec3:
        seg, local = self._locate(t)
        return seg.acceleration(local)


def _bernstein_gram(m: int) -> np.ndarray:
    """Gram matrix of the degree-m Bernstein basis on [0, 1]."""
    g = np.empty((m + 1, m + 1))
    for i in range(m + 1):
        for j in range(m + 1):
            g[i, j] = (
                math.comb(m, i)
                * math.comb(m, j)
                / ((2 * m + 1) * math.comb(2 * m, i + j))
            )
    return g


def jerk_energy_matrix(degree: int, duration: float) -> np.ndarray:
    """PSD matrix Q with integral of |b'''(t)|^2 dt = sum_axis p^T Q p.

    ``p`` is the per-axis vector of control points.  Quadratic curves have
    zero jerk, so Q has a kernel of dimension exactly 3.  Scaling the
    duration by c scales the energy by c^-5.
    """
    if degree < 3:
        raise ValueError(f"jerk energy needs degree >= 3, got {degree}")
    if duration <= 0.0:
        raise ValueError(f"duration must be > 0, got {duration}")
    n = degree
    m = n - 3
    # Third finite-difference operator: jerk-curve control points are
    # scale * D3 @ p with scale = n(n-1)(n-2) / T^3.
    d3 = np.zeros((m + 1, n + 1))
    for i in range(m + 1):
        d3[i, i : i + 4] = (-1.0, 3.0, -3.0, 1.0)
    scale = n * (n - 1) * (n - 2) / duration**3
    q = duration * scale**2 * (d3.T @ _bernstein_gram(m) @ d3)
    return 0.5 * (q + q.T)


@lru_cache(maxsize=None)
def hodograph_matrix(degree: int, duration: float) -> np.ndarray:
    """Linear map from control points to first-hodograph control points."""
    n = degree
    h = np.zeros((n, n + 1))
    for i in range(n):
        h[i, i] = -n / duration
        h[i, i + 1] = n / duration
    return h


@lru_cache(maxsize=None)
def restriction_matrix(degree: int, a: float, b: float) -> np.ndarray:
    """Matrix R mapping control points to those of the curve restricted to [a, b].

    Rows are blossom evaluations, so R @ p gives exact control points of the
    reparameterized sub-curve; this is the linear algebra behind subdivision
    certificates.
    """
    if not 0.0 <= a < b <= 1.0:
        raise ValueError(f"invalid restriction interval [{a}, {b}]")
    n1 = degree + 1
    out = np.empty((n1, n1))
    for col in range(n1):
        # Push a basis control polygon through two de Casteljau splits.
        pts = [0.0] * n1
        pts[col] = 1.0
        pts = _restrict_scalar(pts, a, b)
        for row in range(n1):
            out[row, col] = pts[row]
    return out


def _restrict_scalar(pts: list[float], a: float, b: float) -> list[float]:
    # Keep the right part of a split at a, then the left part at (b-a)/(1-a).
    if a > 0.0:
        pts = _split_right(pts, a)
    s = (b - a) / (1.0 - a) if a < 1.0 else 1.0
    if s < 1.0:
        pts = _split_left(pts, s)
    return pts


def _split_left(pts: list[float], s: float) -> list[float]:
    work = list(pts)
    left = [work[0]]
    for level in range(1, len(pts)):
        for i in range(len(pts) - level):
            work[i] = (1.0 - s) * work[i] + s * work[i + 1]
        left.append(work[0])
    return left


def _split_right(pts: list[float], s: float) -> list[float]:
    work = list(pts)
    right = [work[-1]]
    for level in range(1, len(pts)):
        for i in range(len(pts) - level):
            work[i] = (1.0 - s) * work[i] + s * work[i + 1]
        right.append(work[len(pts) - level - 1])
    right.reverse()
    return right


@lru_cache(maxsize=None)
def subdivision_matrices(degree: int, pieces: int) -> tuple[np.ndarray, ...]:
    """Restriction matrices for a uniform split of [0, 1] into ``pieces``."""
    if pieces < 1:
        raise ValueError(f"pieces must be >= 1, got {pieces}")
    return tuple(
        restriction_matrix(degree, j / pieces, (j + 1) / pieces)
        for j in range(pieces)
    )


def subdivided_max_abs(points: np.ndarray, pieces: int) -> float:
    """Componentwise |control point| bound after uniform subdivision.

    ``points`` is (n+1, d).  The returned value upper-bounds the curve's
    max-norm over [0, 1] and converges to it as ``pieces`` grows.
    """
    degree = points.shape[0] - 1
    best = 0.0
    for r in subdivision_matrices(degree, pieces):
        best = max(best, float(np.max(np.abs(r @ points))))
    return best
