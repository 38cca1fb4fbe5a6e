"""
Plane geometry for the arena.

Scalar helpers work on `Vec2`; the intersection routines are vectorized with
numpy so a whole ray fan (or every agent pair) is resolved in one call.
Rectangles are rows of ``(x0, y0, x1, y1)``; discs are centre rows plus a
shared radius.
"""
import enum
import math
from typing import NamedTuple, Tuple

import numpy as np


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":  # type: ignore[override]
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> "Vec2":  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def length(self) -> float:
        return math.hypot(self.x, self.y)

    def distance_to(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def normalized(self) -> "Vec2":
        n = math.hypot(self.x, self.y)
        if n == 0.0:
            return Vec2(0.0, 0.0)
        return Vec2(self.x / n, self.y / n)

    def angle(self) -> float:
        return math.atan2(self.y, self.x)

    def rotated(self, radians: float) -> "Vec2":
        c, s = math.cos(radians), math.sin(radians)
        return Vec2(self.x * c - self.y * s, self.x * s + self.y * c)

    def right(self) -> "Vec2":
        """Clockwise perpendicular: the positive lateral axis."""
        return Vec2(self.y, -self.x)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)

    @classmethod
    def from_angle(cls, radians: float) -> "Vec2":
        return cls(math.cos(radians), math.sin(radians))


class HitCategory(enum.Flag):
    WALL = enum.auto()
    OBSTACLE = enum.auto()
    AGENT = enum.auto()
    AMMO = enum.auto()

    SOLID = WALL | OBSTACLE
    ALL = WALL | OBSTACLE | AGENT | AMMO


def wrap_angle(radians: float) -> float:
    """Map an angle into [-pi, pi)."""
    return (radians + math.pi) % (2.0 * math.pi) - math.pi


def _slab(o: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray, strict: bool):
    """Parameter interval where o + t*d lies between lo and hi along one axis."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    parallel = d == 0.0
    if strict:
        inside = (o > lo) & (o < hi)
    else:
        inside = (o >= lo) & (o <= hi)
    near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
    far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
    return near, far


def ray_rect_distances(origins: np.ndarray, dirs: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Entry distance of each ray into each closed rectangle, inf on a miss.

    origins, dirs: (R, 2); rects: (M, 4). Returns (R, M). A ray starting inside
    a rectangle hits it at distance 0.
    """
    if len(rects) == 0:
        return np.full((len(origins), 0), np.inf)
    ox, oy = origins[:, 0:1], origins[:, 1:2]
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    nx, fx = _slab(ox, dx, rects[None, :, 0], rects[None, :, 2], strict=False)
    ny, fy = _slab(oy, dy, rects[None, :, 1], rects[None, :, 3], strict=False)
    entry = np.maximum(nx, ny)
    exit_ = np.minimum(fx, fy)
    hit = (entry <= exit_) & (exit_ >= 0.0)
    return np.where(hit, np.maximum(entry, 0.0), np.inf)


def ray_disc_distances(origins: np.ndarray, dirs: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """First contact distance of each unit ray with each closed disc, inf on a miss."""
    if len(centers) == 0:
        return np.full((len(origins), 0), np.inf)
    fx = origins[:, 0:1] - centers[None, :, 0]
    fy = origins[:, 1:2] - centers[None, :, 1]
    b = fx * dirs[:, 0:1] + fy * dirs[:, 1:2]
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - root
    t = np.where(c <= 0.0, 0.0, np.where(t0 >= 0.0, t0, np.inf))
    return np.where((disc < 0.0) & (c > 0.0), np.inf, t)


def ray_wall_distances(origins: np.ndarray, dirs: np.ndarray, side: float) -> np.ndarray:
    """Distance at which each ray leaves the square [0, side]^2."""
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dirs[:, 0] > 0, (side - origins[:, 0]) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, -origins[:, 0] / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (side - origins[:, 1]) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, -origins[:, 1] / dirs[:, 1], np.inf))
    return np.maximum(np.minimum(tx, ty), 0.0)


def segments_blocked(starts: np.ndarray, ends: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """True where the open segment start->end passes through an open rectangle.

    Endpoints are put in lexicographic order first so the answer is exactly
    symmetric in (start, end).
    """
    if len(rects) == 0 or len(starts) == 0:
        return np.zeros(len(starts), dtype=bool)
    swap = (ends[:, 0] < starts[:, 0]) | ((ends[:, 0] == starts[:, 0]) & (ends[:, 1] < starts[:, 1]))
    a = np.where(swap[:, None], ends, starts)
    b = np.where(swap[:, None], starts, ends)
    d = b - a
    nx, fx = _slab(a[:, 0:1], d[:, 0:1], rects[None, :, 0], rects[None, :, 2], strict=True)
    ny, fy = _slab(a[:, 1:2], d[:, 1:2], rects[None, :, 1], rects[None, :, 3], strict=True)
    lo = np.maximum(np.maximum(nx, ny), 0.0)
    hi = np.minimum(np.minimum(fx, fy), 1.0)
    degenerate = np.all(d == 0.0, axis=1)
    return np.any(lo < hi, axis=1) & ~degenerate


def point_in_rects(points: np.ndarray, rects: np.ndarray, strict: bool = True) -> np.ndarray:
    """(P,) mask of points inside any rectangle (open interior when strict)."""
    if len(rects) == 0:
        return np.zeros(len(points), dtype=bool)
    px, py = points[:, 0:1], points[:, 1:2]
    if strict:
        inside = (px > rects[:, 0]) & (px < rects[:, 2]) & (py > rects[:, 1]) & (py < rects[:, 3])
    else:
        inside = (px >= rects[:, 0]) & (px <= rects[:, 2]) & (py >= rects[:, 1]) & (py <= rects[:, 3])
    return inside.any(axis=1)


def distance_to_rects(point: Tuple[float, float], rects: np.ndarray) -> float:
    """Euclidean distance from a point to the nearest rectangle (0 inside)."""
    if len(rects) == 0:
        return math.inf
    dx = np.maximum(np.maximum(rects[:, 0] - point[0], 0.0), point[0] - rects[:, 2])
    dy = np.maximum(np.maximum(rects[:, 1] - point[1], 0.0), point[1] - rects[:, 3])
    return float(np.min(np.hypot(dx, dy)))


def inflate(rects: np.ndarray, margin: float) -> np.ndarray:
    if len(rects) == 0:
        return rects
    return rects + np.array([-margin, -margin, margin, margin])
