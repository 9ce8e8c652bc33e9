"""Safe-set geometry: an ordered chain of overlapping axis-aligned boxes.

The corridor over-approximates free space as a union of axis-aligned boxes
where consecutive boxes overlap, so a continuous path can thread the chain.
The safety margin is a per-box face-distance (Chebyshev-style containment)
margin, which is cheap, conservative at box junctions, and 1-Lipschitz along
every axis -- good enough as a collision-cost surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Vec3

__all__ = ["Aabb", "Corridor", "CorridorError"]


class CorridorError(ValueError):
    """A corridor query failed (e.g. an endpoint outside all boxes)."""


@dataclass(frozen=True, slots=True)
class Aabb:
    """Axis-aligned box with strictly ordered corners."""

    min_corner: Vec3
    max_corner: Vec3

    def __post_init__(self) -> None:
        lo, hi = self.min_corner, self.max_corner
        if not (lo.x < hi.x and lo.y < hi.y and lo.z < hi.z):
            raise ValueError(
                f"Aabb requires min_corner < max_corner componentwise, "
                f"got {lo} .. {hi}"
            )

    def contains(self, p: Vec3) -> bool:
        lo, hi = self.min_corner, self.max_corner
        return (
            lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y and lo.z <= p.z <= hi.z
        )

    def margin(self, p: Vec3) -> float:
        """Min signed distance from p to the six faces (positive inside)."""
        lo, hi = self.min_corner, self.max_corner
        return min(
            p.x - lo.x,
            hi.x - p.x,
            p.y - lo.y,
            hi.y - p.y,
            p.z - lo.z,
            hi.z - p.z,
        )

    def center(self) -> Vec3:
        return Vec3(
            0.5 * (self.min_corner.x + self.max_corner.x),
            0.5 * (self.min_corner.y + self.max_corner.y),
            0.5 * (self.min_corner.z + self.max_corner.z),
        )

    def intersection(self, other: Aabb) -> Aabb | None:
        """Open intersection with another box, or None if empty."""
        lo = Vec3(
            max(self.min_corner.x, other.min_corner.x),
            max(self.min_corner.y, other.min_corner.y),
            max(self.min_corner.z, other.min_corner.z),
        )
        hi = Vec3(
            min(self.max_corner.x, other.max_corner.x),
            min(self.max_corner.y, other.max_corner.y),
            min(self.max_corner.z, other.max_corner.z),
        )
        if lo.x < hi.x and lo.y < hi.y and lo.z < hi.z:
            return Aabb(lo, hi)
        return None

    def shrunk(self, clearance: float) -> Aabb:
        """Box shrunk by a clearance on every face (must stay non-empty)."""
        if clearance == 0.0:
            return self
        lo = self.min_corner
        hi = self.max_corner
        c = clearance
        if 2.0 * c >= min(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z):
            raise ValueError(
                f"clearance {c} leaves an empty box {lo} .. {hi}"
            )
        return Aabb(
            Vec3(lo.x + c, lo.y + c, lo.z + c), Vec3(hi.x - c, hi.y - c, hi.z - c)
        )


@dataclass(frozen=True, slots=True)
class Corridor:
    """Non-empty chain of boxes: box i and box i+1 overlap with open interior.

    The chain ordering is load-bearing: planners assign spline segments to
    boxes by index interval, so general adjacency graphs are rejected here.
    """

    boxes: tuple[Aabb, ...]

    def __post_init__(self) -> None:
        boxes = tuple(self.boxes)
        object.__setattr__(self, "boxes", boxes)
        if not boxes:
            raise ValueError("corridor requires at least one box")
        for i in range(len(boxes) - 1):
            if boxes[i].intersection(boxes[i + 1]) is None:
                raise ValueError(
                    f"corridor boxes {i} and {i + 1} have empty open intersection"
                )

    def contains_point(self, p: Vec3) -> bool:
        """True iff p lies in the closed union of boxes."""
        return any(box.contains(p) for box in self.boxes)

    def safety_margin(self, p: Vec3) -> float:
        """Best per-box containment margin at p (positive strictly inside)."""
        return max(box.margin(p) for box in self.boxes)

    def sphere_is_safe(self, center: Vec3, radius: float) -> bool:
        """Conservative check: the sphere fits inside at least one box."""
        if radius < 0.0:
            raise ValueError(f"radius must be >= 0, got {radius}")
        return self.safety_margin(center) >= radius

    def boxes_containing(self, p: Vec3) -> list[int]:
        return [i for i, box in enumerate(self.boxes) if box.contains(p)]

    def box_sequence_for(self, start: Vec3, goal: Vec3) -> list[int]:
        """Contiguous index path from a box containing start to one containing goal.

        When an endpoint lies in several boxes (an overlap region), the box
        nearest the other endpoint along the chain is chosen, so the interval
        is as short as possible.
        """
        start_boxes = self.boxes_containing(start)
        if not start_boxes:
            raise CorridorError(f"start point {start} is outside every corridor box")
        goal_boxes = self.boxes_containing(goal)
        if not goal_boxes:
            raise CorridorError(f"goal point {goal} is outside every corridor box")
        best = min(
            ((abs(i - j), i, j) for i in start_boxes for j in goal_boxes),
            key=lambda t: (t[0], t[1], t[2]),
        )
        _, i, j = best
        step = 1 if j >= i else -1
        return list(range(i, j + step, step))

    def overlap_center(self, i: int, j: int) -> Vec3:
        """Center of the overlap region between boxes i and j."""
        inter = self.boxes[i].intersection(self.boxes[j])
        if inter is None:
            raise CorridorError(f"boxes {i} and {j} do not overlap")
        return inter.center()
