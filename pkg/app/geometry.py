"""
Planar primitives shared by every module: axis-aligned boxes, balls, and exact
convex polygon clipping (Sutherland-Hodgman) for rectangle overlap areas.
"""
from dataclasses import dataclass

import numpy as np

from .config import GeometryError


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise GeometryError(f"Empty region: {self}")

    @classmethod
    def square(cls, center, side: float) -> "Box":
        cx, cy = center
        h = side / 2
        return cls(cx - h, cx + h, cy - h, cy + h)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def center(self) -> tuple:
        return ((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )

    def contains(self, x, y):
        """Half-open membership [xmin, xmax) x [ymin, ymax); degenerate sides are closed."""
        x = np.asarray(x)
        y = np.asarray(y)
        in_x = (x >= self.xmin) & ((x < self.xmax) | ((self.xmax == self.xmin) & (x == self.xmin)))
        in_y = (y >= self.ymin) & ((y < self.ymax) | ((self.ymax == self.ymin) & (y == self.ymin)))
        return in_x & in_y

    def expanded(self, margin: float) -> "Box":
        return Box(self.xmin - margin, self.xmax + margin, self.ymin - margin, self.ymax + margin)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError(f"Ball radius must be positive (got {self.radius})")

    @property
    def area(self) -> float:
        return float(np.pi * self.radius**2)

    def contains(self, x, y):
        cx, cy = self.center
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 <= self.radius**2

    def bounding_box(self) -> Box:
        return Box.square(self.center, 2 * self.radius)


def polygon_area(polygon) -> float:
    if len(polygon) < 3:
        return 0.0
    pts = np.asarray(polygon, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2)


def _orient_ccw(polygon: list) -> list:
    pts = np.asarray(polygon, dtype=float)
    signed = np.dot(pts[:, 0], np.roll(pts[:, 1], -1)) - np.dot(pts[:, 1], np.roll(pts[:, 0], -1))
    return polygon if signed >= 0 else polygon[::-1]


def clip_polygon(subject, clip) -> list:
    """Intersection of a polygon with a convex clip polygon."""
    output = [tuple(p) for p in subject]
    clip = _orient_ccw([tuple(p) for p in clip])
    if not output or not clip:
        return []

    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0

    def intersection(s, e, a, b):
        dc = (a[0] - b[0], a[1] - b[1])
        dp = (s[0] - e[0], s[1] - e[1])
        n1 = a[0] * b[1] - a[1] * b[0]
        n2 = s[0] * e[1] - s[1] * e[0]
        denom = dc[0] * dp[1] - dc[1] * dp[0]
        return ((n1 * dp[0] - n2 * dc[0]) / denom, (n1 * dp[1] - n2 * dc[1]) / denom)

    a = clip[-1]
    for b in clip:
        if not output:
            return []
        current, output = output, []
        s = current[-1]
        for e in current:
            if inside(e, a, b):
                if not inside(s, a, b):
                    output.append(intersection(s, e, a, b))
                output.append(e)
            elif inside(s, a, b):
                output.append(intersection(s, e, a, b))
            s = e
        a = b
    return output


def convex_intersection_area(first, second) -> float:
    return polygon_area(clip_polygon(first, second))
