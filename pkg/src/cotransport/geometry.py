"""Planar geometry primitives: vectors, poses, frame transforms, link clearance.

Everything here is pure and stateless; angles are radians, distances meters.
Headings are always kept in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]. Raises ValueError on non-finite input."""
    if not math.isfinite(a):
        raise ValueError(f"non-finite angle: {a!r}")
    r = (a + math.pi) % TWO_PI - math.pi
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Vector2:
    x: float
    y: float

    def __add__(self, other: "Vector2") -> "Vector2":
        return Vector2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vector2") -> "Vector2":
        return Vector2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vector2":
        return Vector2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def dot(self, other: "Vector2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vector2") -> float:
        """z component of self x other."""
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def bearing(self) -> float:
        """Angle of this vector, atan2(y, x)."""
        return math.atan2(self.y, self.x)

    def rotated(self, angle: float) -> "Vector2":
        c, s = math.cos(angle), math.sin(angle)
        return Vector2(c * self.x - s * self.y, s * self.x + c * self.y)

    def perp(self) -> "Vector2":
        """Left-hand perpendicular; equals G @ v for the 90-degree skew matrix G."""
        return Vector2(-self.y, self.x)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


@dataclass(frozen=True)
class Pose2D:
    position: Vector2
    heading: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def x(self) -> float:
        return self.position.x

    @property
    def y(self) -> float:
        return self.position.y

    @staticmethod
    def from_xytheta(x: float, y: float, theta: float) -> "Pose2D":
        return Pose2D(Vector2(x, y), theta)


@dataclass(frozen=True)
class RelativePoseMeasurement:
    """Pose of a target expressed in the observer's body frame."""

    relative_position: Vector2
    relative_heading: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "relative_heading", wrap_angle(self.relative_heading))


def to_frame(observer: Pose2D, world_point: Vector2) -> Vector2:
    """Express a world point in the observer's body frame."""
    return (world_point - observer.position).rotated(-observer.heading)


def from_frame(observer: Pose2D, local_point: Vector2) -> Vector2:
    """Inverse of to_frame: express a body-frame point in the world frame."""
    return local_point.rotated(observer.heading) + observer.position


def pose_to_frame(observer: Pose2D, world_pose: Pose2D) -> Pose2D:
    """Express a world pose in the observer's body frame."""
    return Pose2D(
        to_frame(observer, world_pose.position),
        world_pose.heading - observer.heading,
    )


def pose_from_frame(observer: Pose2D, local_pose: Pose2D) -> Pose2D:
    """Express a body-frame pose in the world frame."""
    return Pose2D(
        from_frame(observer, local_pose.position),
        local_pose.heading + observer.heading,
    )


def segment_clearance(p_o: Vector2, p_i: Vector2, p_j: Vector2) -> float | None:
    """Perpendicular distance from p_o to the line through segment (p_i, p_j).

    Only defined inside the perpendicular band of the segment: the strip where
    (p_o - p_i) . u > 0 and (p_o - p_j) . u < 0 for u = p_j - p_i. Outside the
    band returns None and the caller falls back to endpoint distances. The
    distance is returned as an absolute value; which side of the link the point
    lies on carries no meaning here.
    """
    u = p_j - p_i
    if u.norm() == 0.0:
        raise ValueError("segment endpoints coincide")
    if (p_o - p_i).dot(u) <= 0.0 or (p_o - p_j).dot(u) >= 0.0:
        return None
    return abs(u.cross(p_o - p_i)) / u.norm()


def point_segment_distance(p_o: Vector2, p_i: Vector2, p_j: Vector2) -> float:
    """Distance from a point to a segment, endpoint fallback outside the band."""
    d = segment_clearance(p_o, p_i, p_j)
    if d is None:
        return min((p_o - p_i).norm(), (p_o - p_j).norm())
    return d


def segment_segment_distance(
    a0: Vector2, a1: Vector2, b0: Vector2, b1: Vector2
) -> float:
    """Minimum distance between two segments (0 when they intersect)."""
    if _segments_intersect(a0, a1, b0, b1):
        return 0.0
    return min(
        point_segment_distance(b0, a0, a1),
        point_segment_distance(b1, a0, a1),
        point_segment_distance(a0, b0, b1),
        point_segment_distance(a1, b0, b1),
    )


def _segments_intersect(a0: Vector2, a1: Vector2, b0: Vector2, b1: Vector2) -> bool:
    d1 = (a1 - a0).cross(b0 - a0)
    d2 = (a1 - a0).cross(b1 - a0)
    d3 = (b1 - b0).cross(a0 - b0)
    d4 = (b1 - b0).cross(a1 - b0)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # collinear overlaps count as touching
    for p, q0, q1, d in ((b0, a0, a1, d1), (b1, a0, a1, d2), (a0, b0, b1, d3), (a1, b0, b1, d4)):
        if d == 0.0 and _on_segment(p, q0, q1):
            return True
    return False


def _on_segment(p: Vector2, q0: Vector2, q1: Vector2) -> bool:
    return (
        min(q0.x, q1.x) <= p.x <= max(q0.x, q1.x)
        and min(q0.y, q1.y) <= p.y <= max(q0.y, q1.y)
    )
