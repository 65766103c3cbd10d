"""Planar geometry kernel.

Vectors, closed polylines, circles and orientation, plus the boundary
integrals that the flux certificates are built from. Everything here is a
pure function of immutable values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np


class GeometryError(ValueError):
    """Raised when a geometric precondition is violated."""


class DegenerateError(GeometryError):
    pass


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite vector ({self.x}, {self.y})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


PointLike = Union[Vec2, Sequence[float], np.ndarray]


def as_vec(p: PointLike) -> Vec2:
    if isinstance(p, Vec2):
        return p
    return Vec2(float(p[0]), float(p[1]))


class Orientation(enum.Enum):
    CCW = "counterclockwise"
    CW = "clockwise"

    @property
    def sign(self) -> int:
        return 1 if self is Orientation.CCW else -1


@dataclass(frozen=True, slots=True)
class Circle:
    center: Vec2
    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"circle radius must be positive, got {self.radius}")

    @classmethod
    def of(cls, center: PointLike, radius: float) -> "Circle":
        return cls(as_vec(center), float(radius))

    def point_at(self, theta: float) -> Vec2:
        return Vec2(self.center.x + self.radius * math.cos(theta),
                    self.center.y + self.radius * math.sin(theta))

    def angle_of(self, p: PointLike) -> float:
        q = as_vec(p)
        return math.atan2(q.y - self.center.y, q.x - self.center.x)


def _vertex_array(vertices) -> np.ndarray:
    arr = np.array([tuple(as_vec(v)) for v in vertices] if not isinstance(vertices, np.ndarray)
                   else vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite vertex")
    return arr


class Path:
    """Open polyline; a sampled piece of trajectory."""

    def __init__(self, vertices) -> None:
        arr = _vertex_array(vertices)
        if len(arr) < 2:
            raise GeometryError("a path needs at least 2 vertices")
        arr.setflags(write=False)
        self.vertices = arr

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1


class ClosedPolyline:
    """Closed polygonal curve. The closing edge (last -> first) is implicit.

    A repeated closing vertex is dropped. With ``jordan=True`` the curve is
    checked for self-intersections and rejected if it has any.
    """

    def __init__(self, vertices, jordan: bool = False) -> None:
        arr = _vertex_array(vertices)
        if len(arr) >= 2 and np.array_equal(arr[0], arr[-1]):
            arr = arr[:-1]
        if len(arr) < 3:
            raise GeometryError("a closed polyline needs at least 3 vertices")
        nxt = np.roll(arr, -1, axis=0)
        if np.any(np.all(arr == nxt, axis=1)):
            raise GeometryError("consecutive vertices must be distinct")
        arr.setflags(write=False)
        self.vertices = arr
        self.jordan = jordan
        if jordan and not is_simple(arr):
            raise GeometryError("polyline flagged jordan=True is self-intersecting")

    def __len__(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def perimeter(self) -> float:
        return float(np.hypot(*self.edges().T).sum())

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def reversed(self) -> "ClosedPolyline":
        return ClosedPolyline(self.vertices[::-1].copy(), jordan=self.jordan)

    def orientation(self, tol: float = 0.0) -> Orientation:
        area = signed_area(self)
        if abs(area) <= tol * max(self.diameter() ** 2, 1e-300) or area == 0.0:
            raise DegenerateError("polyline has (near) zero signed area")
        return Orientation.CCW if area > 0 else Orientation.CW

    def as_ccw(self) -> "ClosedPolyline":
        return self if self.orientation() is Orientation.CCW else self.reversed()


def rotate_quarter(v: PointLike, o: Orientation) -> Vec2:
    """Rotate by +pi/2 for CCW, -pi/2 for CW."""
    w = as_vec(v)
    if o is Orientation.CCW:
        return Vec2(-w.y, w.x)
    return Vec2(w.y, -w.x)


def signed_area(p: ClosedPolyline) -> float:
    """Shoelace area; positive iff the vertices run counterclockwise."""
    v = p.vertices
    # shift to the centroid so the sum does not cancel catastrophically
    v = v - v.mean(axis=0)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def normal_integral(p: ClosedPolyline) -> Vec2:
    """Outward unit normal integrated along the boundary, edge by edge."""
    if not isinstance(p, ClosedPolyline):
        raise GeometryError("normal_integral needs a closed polyline")
    e = p.edges()
    length = np.hypot(e[:, 0], e[:, 1])
    # outward normal of a CCW curve is the tangent turned clockwise
    s = p.orientation().sign
    nx = s * e[:, 1] / length
    ny = -s * e[:, 0] / length
    return Vec2(math.fsum(nx * length), math.fsum(ny * length))


def arc_normal_integral(c: Circle, th1: float, th2: float) -> Vec2:
    """Closed form of the outward normal integrated over an arc of ``c``."""
    if not (th1 < th2 <= th1 + 2 * math.pi + 1e-15):
        raise GeometryError(f"need th1 < th2 <= th1 + 2pi, got ({th1}, {th2})")
    r = c.radius
    return Vec2(r * (math.sin(th2) - math.sin(th1)), r * (math.cos(th1) - math.cos(th2)))


TANGENT_RTOL = 1e-12


class CircleHits(NamedTuple):
    params: tuple[float, ...]
    tangent: bool


def segment_circle_hits(a: PointLike, b: PointLike, c: Circle) -> CircleHits:
    """Parameters u in [0, 1] where a + u (b - a) lies on the circle.

    Tangency is decided on the normalised discriminant r^2 - dist(center, line)^2.
    """
    a, b = as_vec(a), as_vec(b)
    dx, dy = b.x - a.x, b.y - a.y
    A = dx * dx + dy * dy
    if A == 0.0:
        raise GeometryError("degenerate segment")
    ax, ay = a.x - c.center.x, a.y - c.center.y
    B = dx * ax + dy * ay
    C = ax * ax + ay * ay - c.radius * c.radius
    disc = (B * B - A * C) / A
    r2 = c.radius * c.radius
    if abs(disc) <= TANGENT_RTOL * r2:
        u = -B / A
        return CircleHits((u,) if 0.0 <= u <= 1.0 else (), 0.0 <= u <= 1.0)
    if disc < 0:
        return CircleHits((), False)
    sq = math.sqrt(disc * A)
    # stable quadratic roots
    q = -(B + math.copysign(sq, B))
    roots = sorted({q / A, C / q} if q != 0.0 else {0.0})
    return CircleHits(tuple(u for u in roots if 0.0 <= u <= 1.0), False)


class Meet(NamedTuple):
    seg_param: float
    path_param: float
    point: Vec2
    segment_end: bool
    path_vertex: bool

    @property
    def endpoint_hit(self) -> bool:
        return self.segment_end or self.path_vertex


_PARAM_EPS = 1e-12


def first_meet(a: PointLike, b: PointLike, path: Union[Path, np.ndarray]) -> Optional[Meet]:
    """First point of ``path`` met when walking from a to b.

    The path parameter is ``k + v`` for a hit at fraction v of segment k.
    Ties on the segment parameter go to the smallest path parameter.
    """
    a, b = as_vec(a), as_vec(b)
    P = path.vertices if isinstance(path, Path) else np.asarray(path, dtype=float)
    if len(P) < 2:
        raise GeometryError("path needs at least one segment")
    d = np.array([b.x - a.x, b.y - a.y])
    if not d.any():
        raise GeometryError("degenerate segment")
    p0 = P[:-1]
    e = P[1:] - p0
    w = p0 - np.array([a.x, a.y])
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    num_u = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]
    num_v = w[:, 0] * d[1] - w[:, 1] * d[0]

    cands: list[tuple[float, float]] = []
    with np.errstate(divide="ignore", invalid="ignore"):
        u = num_u / denom
        v = num_v / denom
    ok = (denom != 0) & (u >= -_PARAM_EPS) & (u <= 1 + _PARAM_EPS) \
        & (v >= -_PARAM_EPS) & (v <= 1 + _PARAM_EPS)
    for k in np.flatnonzero(ok):
        cands.append((min(max(float(u[k]), 0.0), 1.0), k + min(max(float(v[k]), 0.0), 1.0)))

    # collinear overlaps
    dd = float(d @ d)
    for k in np.flatnonzero((denom == 0) & (num_v == 0)):
        s0 = float((P[k] - (a.x, a.y)) @ d) / dd
        s1 = float((P[k + 1] - (a.x, a.y)) @ d) / dd
        lo, hi = max(min(s0, s1), 0.0), min(max(s0, s1), 1.0)
        if lo <= hi:
            ek = float(e[k] @ e[k])
            v_at = 0.0 if ek == 0 else float(((a.x, a.y) + lo * d - P[k]) @ e[k]) / ek
            cands.append((lo, k + min(max(v_at, 0.0), 1.0)))
    if not cands:
        return None
    u_min = min(c[0] for c in cands)
    u_best, s_best = min((c for c in cands if c[0] <= u_min + _PARAM_EPS), key=lambda c: c[1])
    k = int(min(math.floor(s_best), len(P) - 2))
    frac = s_best - k
    if abs(frac) <= _PARAM_EPS or abs(frac - 1.0) <= _PARAM_EPS:
        idx = k if abs(frac) <= _PARAM_EPS else k + 1
        pt = Vec2(float(P[idx, 0]), float(P[idx, 1]))
        s_best = float(idx)
        vertex = True
    else:
        pt = Vec2(a.x + u_best * d[0], a.y + u_best * d[1])
        vertex = False
    return Meet(u_best, s_best, pt, abs(u_best - 1.0) <= _PARAM_EPS, vertex)


class Region(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


def distance_to_polyline(vertices: np.ndarray, q: PointLike, closed: bool = True) -> float:
    qv = np.array(tuple(as_vec(q)))
    p0 = vertices
    p1 = np.roll(vertices, -1, axis=0) if closed else vertices[1:]
    if not closed:
        p0 = vertices[:-1]
    e = p1 - p0
    ee = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("ij,ij->i", qv - p0, e) / np.where(ee == 0, 1.0, ee), 0.0, 1.0)
    proj = p0 + t[:, None] * e
    return float(np.min(np.hypot(*(proj - qv).T)))


def point_in_region(p: ClosedPolyline, q: PointLike, eps_b: Optional[float] = None) -> Region:
    """Classify q against the region bounded by p (even-odd ray casting).

    Points within ``eps_b`` of the curve are reported as boundary; the band
    defaults to 1e-9 times the polyline's diameter.
    """
    if eps_b is None:
        eps_b = 1e-9 * p.diameter()
    qv = as_vec(q)
    if distance_to_polyline(p.vertices, qv) <= eps_b:
        return Region.BOUNDARY
    x0, y0 = p.vertices[:, 0], p.vertices[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    straddle = (y0 > qv.y) != (y1 > qv.y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (qv.y - y0) * (x1 - x0) / (y1 - y0)
    n = int(np.count_nonzero(straddle & (xcross > qv.x)))
    return Region.INSIDE if n % 2 else Region.OUTSIDE


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_touch(a, b, c, d) -> np.ndarray:
    """Vectorised closed-segment intersection test; arrays of shape (k, 2)."""
    o1 = np.sign(_orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], c[:, 0], c[:, 1]))
    o2 = np.sign(_orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], d[:, 0], d[:, 1]))
    o3 = np.sign(_orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], a[:, 0], a[:, 1]))
    o4 = np.sign(_orient(c[:, 0], c[:, 1], d[:, 0], d[:, 1], b[:, 0], b[:, 1]))
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(p, q, r):
        # r collinear with pq assumed; check the bounding box
        return ((np.minimum(p[:, 0], q[:, 0]) <= r[:, 0]) & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
                & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1]) & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1])))

    hit |= (o1 == 0) & on_seg(a, b, c)
    hit |= (o2 == 0) & on_seg(a, b, d)
    hit |= (o3 == 0) & on_seg(c, d, a)
    hit |= (o4 == 0) & on_seg(c, d, b)
    return hit


def is_simple(vertices, closed: bool = True) -> bool:
    """Sweep over x-sorted segment boxes looking for any non-adjacent contact."""
    V = _vertex_array(vertices)
    A = V
    B = np.roll(V, -1, axis=0) if closed else V[1:]
    if not closed:
        A = V[:-1]
    n = len(A)
    if n < 3:
        return True

    # adjacent segments may only share their common vertex
    nxt = np.arange(n) + 1 if not closed else (np.arange(n) + 1) % n
    pairs_ok = np.ones(n, dtype=bool)
    last = n if closed else n - 1
    e = B - A
    for i in range(last):
        j = nxt[i]
        if j >= n:
            continue
        cr = e[i, 0] * e[j, 1] - e[i, 1] * e[j, 0]
        dt = e[i, 0] * e[j, 0] + e[i, 1] * e[j, 1]
        pairs_ok[i] = not (cr == 0 and dt < 0)
    if not pairs_ok.all():
        return False

    xmin = np.minimum(A[:, 0], B[:, 0])
    xmax = np.maximum(A[:, 0], B[:, 0])
    ymin = np.minimum(A[:, 1], B[:, 1])
    ymax = np.maximum(A[:, 1], B[:, 1])
    order = np.argsort(xmin, kind="stable")
    sxmin = xmin[order]
    ends = np.searchsorted(sxmin, xmax[order], side="right")
    for pos in range(n):
        stop = ends[pos]
        if stop <= pos + 1:
            continue
        i = order[pos]
        js = order[pos + 1:stop]
        js = js[(ymin[js] <= ymax[i]) & (ymax[js] >= ymin[i])]
        # drop neighbours sharing a vertex
        adj = (np.abs(js - i) == 1)
        if closed:
            adj |= (np.abs(js - i) == n - 1)
        js = js[~adj]
        if len(js) == 0:
            continue
        ii = np.full(len(js), i)
        if np.any(_segments_touch(A[ii], B[ii], A[js], B[js])):
            return False
    return True


def polyline_circle_hits(vertices: np.ndarray, c: Circle, closed: bool = True):
    """All points where the polyline meets the circle, as (points, tangent).

    Vectorised form of :func:`segment_circle_hits`; ``tangent`` is True when
    any segment's line is tangent to the circle within tolerance at a point
    of that segment.
    """
    A = vertices if closed else vertices[:-1]
    B = np.roll(vertices, -1, axis=0) if closed else vertices[1:]
    d = B - A
    w = A - np.array([c.center.x, c.center.y])
    aa = np.einsum("ij,ij->i", d, d)
    bb = np.einsum("ij,ij->i", d, w)
    cc = np.einsum("ij,ij->i", w, w) - c.radius ** 2
    disc = (bb * bb - aa * cc) / aa
    r2 = c.radius ** 2
    tan = np.abs(disc) <= TANGENT_RTOL * r2
    u_t = -bb / aa
    tangent = bool(np.any(tan & (u_t >= 0) & (u_t <= 1)))
    sec = (~tan) & (disc > 0)
    sq = np.sqrt(np.where(sec, disc * aa, 0.0))
    q = -(bb + np.copysign(sq, bb))
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = np.where(q != 0, q / aa, 0.0)
        u2 = np.where(q != 0, cc / q, 0.0)
    pts = []
    for u in (u1, u2):
        m = sec & (u >= 0) & (u < 1)
        pts.append(A[m] + u[m, None] * d[m])
    return np.concatenate(pts), tangent
