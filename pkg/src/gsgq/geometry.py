"""Points, rectangles and the distance functions used by the query engine.

Rectangles are closed for MBR tests and open for CBR tests: a user lying on a
bounding edge of a CBR is not "inside" it.
"""
from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional


class Point(NamedTuple):
    x: float
    y: float


class Rect(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float

    @classmethod
    def of_point(cls, p) -> "Rect":
        return cls(p[0], p[1], p[0], p[1])

    @classmethod
    def square(cls, center, side: float) -> "Rect":
        h = side / 2.0
        return cls(center[0] - h, center[1] - h, center[0] + h, center[1] + h)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> Point:
        return Point((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)


DOMAIN = Rect(0.0, 0.0, 1.0, 1.0)


def dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def d_max(g, v: int, w: Iterable[int]) -> float:
    """Largest distance from user ``v`` to any member of ``w``."""
    w = list(w)
    if not w:
        raise ValueError("d_max is undefined for an empty set")
    pv = g.point(v)
    return max(dist(pv, g.point(u)) for u in w)


def min_dist_point_rect(p, r: Rect) -> float:
    dx = max(r.x0 - p[0], 0.0, p[0] - r.x1)
    dy = max(r.y0 - p[1], 0.0, p[1] - r.y1)
    return math.hypot(dx, dy)


def strictly_inside(p, r: Rect) -> bool:
    return r.x0 < p[0] < r.x1 and r.y0 < p[1] < r.y1


def contains_point(r: Rect, p) -> bool:
    return r.x0 <= p[0] <= r.x1 and r.y0 <= p[1] <= r.y1


def d_in(p, r: Rect) -> float:
    """Distance from ``p`` to the nearest bounding edge of ``r``; 0 unless strictly inside."""
    if not strictly_inside(p, r):
        return 0.0
    return min(p[0] - r.x0, r.x1 - p[0], p[1] - r.y0, r.y1 - p[1])


def rect_intersection(a: Rect, b: Rect) -> Optional[Rect]:
    x0, y0 = max(a.x0, b.x0), max(a.y0, b.y0)
    x1, y1 = min(a.x1, b.x1), min(a.y1, b.y1)
    if x0 > x1 or y0 > y1:
        return None
    return Rect(x0, y0, x1, y1)


def intersects(a: Rect, b: Rect) -> bool:
    return a.x0 <= b.x1 and b.x0 <= a.x1 and a.y0 <= b.y1 and b.y0 <= a.y1


def within_interior(inner: Rect, outer: Rect) -> bool:
    """True iff the closed ``inner`` lies in the open interior of ``outer``.

    This is the pruning precondition for range queries: the range sits inside
    the CBR and touches none of its bounding edges.
    """
    return outer.x0 < inner.x0 and inner.x1 < outer.x1 and outer.y0 < inner.y0 and inner.y1 < outer.y1


def union_rect(a: Rect, b: Rect) -> Rect:
    return Rect(min(a.x0, b.x0), min(a.y0, b.y0), max(a.x1, b.x1), max(a.y1, b.y1))


def bounding_rect(points) -> Rect:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return Rect(min(xs), min(ys), max(xs), max(ys))


def clamp_point(p, r: Rect) -> Point:
    return Point(min(max(p[0], r.x0), r.x1), min(max(p[1], r.y0), r.y1))
