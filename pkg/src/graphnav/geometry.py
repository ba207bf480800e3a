"""Planar geometry: angle wrapping, arc-length polylines, oriented-rectangle overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.fmod(theta + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def distance_to(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


class Polyline:
    """Piecewise-linear path parameterized by arc length.

    Lookups beyond either end extrapolate along the terminal segment, so a
    follower near the end of the path always has a defined lookahead point.
    """

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError(f"polyline needs (M, 2) points, got shape {pts.shape}")
        segs = np.diff(pts, axis=0)
        lens = np.hypot(segs[:, 0], segs[:, 1])
        if np.any(lens <= 0.0):
            raise ValueError("polyline contains a zero-length segment")
        self.points = pts
        self._segs = segs
        self._lens = lens
        self._cum = np.concatenate([[0.0], np.cumsum(lens)])
        self.length = float(self._cum[-1])

    def _segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        return min(max(i, 0), len(self._lens) - 1)

    def point_at(self, s: float) -> tuple[float, float]:
        if s <= 0.0:
            d = self._segs[0] / self._lens[0]
            p = self.points[0] + d * s
            return float(p[0]), float(p[1])
        if s >= self.length:
            d = self._segs[-1] / self._lens[-1]
            p = self.points[-1] + d * (s - self.length)
            return float(p[0]), float(p[1])
        i = self._segment_index(s)
        t = (s - self._cum[i]) / self._lens[i]
        p = self.points[i] + t * self._segs[i]
        return float(p[0]), float(p[1])

    def heading_at(self, s: float) -> float:
        i = self._segment_index(min(max(s, 0.0), self.length))
        seg = self._segs[i]
        return math.atan2(seg[1], seg[0])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Arc length of the closest path point and the distance to it."""
        p = np.array([x, y])
        rel = p - self.points[:-1]
        t = np.clip((rel * self._segs).sum(axis=1) / (self._lens**2), 0.0, 1.0)
        closest = self.points[:-1] + t[:, None] * self._segs
        d2 = ((p - closest) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        s = self._cum[i] + t[i] * self._lens[i]
        return float(s), float(math.sqrt(d2[i]))

    def sample(self, step: float) -> np.ndarray:
        """Points every `step` meters along the path, endpoints included."""
        n = max(2, int(math.ceil(self.length / step)) + 1)
        return np.array([self.point_at(s) for s in np.linspace(0.0, self.length, n)])


def obb_corners(cx: float, cy: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of a length x width rectangle centered at (cx, cy), rotated by heading."""
    hl, hw = 0.5 * length, 0.5 * width
    c, s = math.cos(heading), math.sin(heading)
    local = ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
    return np.array([[cx + dx * c - dy * s, cy + dx * s + dy * c] for dx, dy in local])


def _separated_on_axes(ca: np.ndarray, cb: np.ndarray) -> bool:
    # Two unique edge normals per rectangle suffice for the separating-axis test.
    for corners in (ca, cb):
        for i in (0, 1):
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return True
    return False


def obb_overlap(ca: np.ndarray, cb: np.ndarray) -> bool:
    return not _separated_on_axes(ca, cb)


def rects_collide(
    ax: float, ay: float, ah: float, al: float, aw: float,
    bx: float, by: float, bh: float, bl: float, bw: float,
) -> bool:
    """Oriented-rectangle overlap with a bounding-circle early exit."""
    ra = 0.5 * math.hypot(al, aw)
    rb = 0.5 * math.hypot(bl, bw)
    if math.hypot(bx - ax, by - ay) > ra + rb:
        return False
    return obb_overlap(obb_corners(ax, ay, ah, al, aw), obb_corners(bx, by, bh, bl, bw))
