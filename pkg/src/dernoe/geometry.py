"""Convex geometry in the active/reactive power plane.

Every envelope in the package is a convex polygon in (p, q) space, with p in
MW and q in MVAr. Polygons are stored counter-clockwise with duplicate and
collinear vertices removed; points and segments are valid (degenerate)
polygons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Collinearity threshold on edge cross products, MW^2 units.
CROSS_TOL = 1e-12


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PqPoint:
    p: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise GeometryError(f"non-finite point ({self.p}, {self.q})")

    def __iter__(self):
        yield self.p
        yield self.q


def _as_xy(pt) -> tuple[float, float]:
    if isinstance(pt, PqPoint):
        return (pt.p, pt.q)
    p, q = pt
    return (float(p), float(q))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _monotone_chain(pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    pts = sorted(set(pts))
    if len(pts) <= 1:
        return pts
    lower: list[tuple[float, float]] = []
    for pt in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], pt) <= CROSS_TOL:
            lower.pop()
        lower.append(pt)
    upper: list[tuple[float, float]] = []
    for pt in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], pt) <= CROSS_TOL:
            upper.pop()
        upper.append(pt)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        hull = hull[:1]
    return hull


@dataclass(frozen=True)
class PqPolygon:
    """Convex polygon with CCW vertices; normalized on construction."""

    vertices: tuple[tuple[float, float], ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, vertices: Iterable):
        pts = [_as_xy(v) for v in vertices]
        if not pts:
            raise GeometryError("polygon needs at least one vertex")
        for p, q in pts:
            if not (math.isfinite(p) and math.isfinite(q)):
                raise GeometryError(f"non-finite vertex ({p}, {q})")
        hull = _monotone_chain(pts)
        object.__setattr__(self, "vertices", tuple(hull))
        arr = np.array(hull, dtype=float).reshape(-1, 2)
        arr.flags.writeable = False
        object.__setattr__(self, "_array", arr)

    @property
    def array(self) -> np.ndarray:
        return self._array

    def __len__(self):
        return len(self.vertices)

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) < 3

    def translate(self, dp: float, dq: float) -> "PqPolygon":
        return PqPolygon((p + dp, q + dq) for p, q in self.vertices)

    def scale(self, sp: float, sq: float | None = None) -> "PqPolygon":
        sq = sp if sq is None else sq
        return PqPolygon((p * sp, q * sq) for p, q in self.vertices)

    def p_range(self) -> tuple[float, float]:
        return float(self._array[:, 0].min()), float(self._array[:, 0].max())

    def q_range(self) -> tuple[float, float]:
        return float(self._array[:, 1].min()), float(self._array[:, 1].max())


@dataclass(frozen=True)
class HalfPlaneSet:
    """Rows (a_p, a_q, b) meaning a_p*p + a_q*q <= b, with unit normals."""

    rows: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.rows:
            raise GeometryError("half-plane set must be non-empty")

    @property
    def A(self) -> np.ndarray:
        return np.array([r[:2] for r in self.rows], dtype=float)

    @property
    def b(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def slack(self, pt) -> np.ndarray:
        p, q = _as_xy(pt)
        return self.b - self.A @ np.array([p, q])


def convex_hull(points: Sequence) -> PqPolygon:
    pts = [_as_xy(p) for p in points]
    if not pts:
        raise GeometryError("convex hull of an empty point set")
    return PqPolygon(pts)


def _edge_angle(dx: float, dy: float) -> float:
    a = math.atan2(dy, dx)
    return a + 2.0 * math.pi if a < 0.0 else a


def _bottom_index(verts) -> int:
    return min(range(len(verts)), key=lambda i: (verts[i][1], verts[i][0]))


def _from_bottom(verts) -> tuple[list[tuple[float, float]], list[float]]:
    """Vertices rotated to start at the lowest vertex, plus edge angles."""
    n = len(verts)
    s = _bottom_index(verts)
    ordered = [verts[(s + i) % n] for i in range(n)]
    angles = []
    if n > 1:
        for i in range(n):
            a, b = ordered[i], ordered[(i + 1) % n]
            angles.append(_edge_angle(b[0] - a[0], b[1] - a[1]))
    return ordered, angles


def minkowski_sum(a: PqPolygon, b: PqPolygon) -> PqPolygon:
    """Minkowski sum by merging the two edge sequences in polar-angle order.

    Both polygons are walked CCW from their lowest (then leftmost) vertex,
    whose edges have monotonically increasing angle in [0, 2*pi). Parallel
    edges (equal angle) advance both walks at once, i.e. they are summed.
    """
    va, ang_a = _from_bottom(a.vertices)
    vb, ang_b = _from_bottom(b.vertices)
    na, nb = len(ang_a), len(ang_b)
    i = j = 0
    out = []
    while i < na or j < nb:
        pa, pb = va[i % len(va)], vb[j % len(vb)]
        out.append((pa[0] + pb[0], pa[1] + pb[1]))
        ea = ang_a[i] if i < na else math.inf
        eb = ang_b[j] if j < nb else math.inf
        if abs(ea - eb) <= 1e-12:
            i += 1
            j += 1
        elif ea < eb:
            i += 1
        else:
            j += 1
    if not out:
        out.append((va[0][0] + vb[0][0], va[0][1] + vb[0][1]))
    return PqPolygon(out)


def minkowski_sum_bruteforce(a: PqPolygon, b: PqPolygon) -> PqPolygon:
    """Hull of all pairwise vertex sums; O(nm), used as a cross-check."""
    sums = (a.array[:, None, :] + b.array[None, :, :]).reshape(-1, 2)
    return convex_hull([tuple(r) for r in sums])


def to_halfplanes(poly: PqPolygon) -> HalfPlaneSet:
    """One normalized outward-facing row per edge."""
    if len(poly) < 3:
        raise GeometryError(
            f"half-plane form needs >= 3 vertices, polygon has {len(poly)}")
    rows = []
    v = poly.vertices
    n = len(v)
    for i in range(n):
        (p0, q0), (p1, q1) = v[i], v[(i + 1) % n]
        dx, dy = p1 - p0, q1 - q0
        norm = math.hypot(dx, dy)
        ap, aq = dy / norm, -dx / norm
        # max over both endpoints absorbs rounding so each vertex is feasible
        b = max(ap * p0 + aq * q0, ap * p1 + aq * q1)
        rows.append((ap, aq, b))
    return HalfPlaneSet(tuple(rows))


def halfplane_description(poly: PqPolygon) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Linear description usable for any polygon, degenerate ones included.

    Returns ``(A_ub, b_ub, A_eq, b_eq)`` such that the polygon equals
    ``{x : A_ub x <= b_ub, A_eq x = b_eq}``.
    """
    n = len(poly)
    empty = np.zeros((0, 2)), np.zeros(0)
    if n >= 3:
        hp = to_halfplanes(poly)
        return hp.A, hp.b, *empty
    if n == 1:
        return (*empty, np.eye(2), poly.array[0].copy())
    (p0, q0), (p1, q1) = poly.vertices
    dx, dy = p1 - p0, q1 - q0
    norm = math.hypot(dx, dy)
    ux, uy = dx / norm, dy / norm
    a_eq = np.array([[uy, -ux]])
    b_eq = np.array([uy * p0 - ux * q0])
    a_ub = np.array([[ux, uy], [-ux, -uy]])
    b_ub = np.array([ux * p1 + uy * q1, -(ux * p0 + uy * q0)])
    return a_ub, b_ub, a_eq, b_eq


def clip(poly: PqPolygon, ap: float, aq: float, b: float) -> PqPolygon | None:
    """Intersect with one half-plane; None when the result is empty."""
    verts = poly.vertices
    vals = [ap * p + aq * q - b for p, q in verts]
    if len(verts) == 1:
        return poly if vals[0] <= 1e-12 else None
    out = []
    n = len(verts)
    # a segment is walked once, not as a closed loop
    n_edges = 1 if n == 2 else n
    for i in range(n_edges):
        cur, nxt = verts[i], verts[(i + 1) % n]
        fc, fn = vals[i], vals[(i + 1) % n]
        if fc <= 0.0:
            out.append(cur)
        if (fc < 0.0 < fn) or (fn < 0.0 < fc):
            t = fc / (fc - fn)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    if n == 2 and vals[1] <= 0.0:
        out.append(verts[1])
    if not out:
        return None
    return PqPolygon(out)


def from_halfplanes(hps: HalfPlaneSet, bound: float = 1e6) -> PqPolygon:
    """Intersect the half-planes, starting from a large bounding box."""
    box = PqPolygon([(-bound, -bound), (bound, -bound), (bound, bound), (-bound, bound)])
    poly: PqPolygon | None = box
    for ap, aq, b in hps.rows:
        poly = clip(poly, ap, aq, b)
        if poly is None:
            raise GeometryError("half-plane set is empty")
    if np.abs(poly.array).max() >= bound * (1 - 1e-9):
        raise GeometryError("half-plane set is unbounded")
    return poly


def intersect(a: PqPolygon, b: PqPolygon) -> PqPolygon | None:
    """Intersection of two convex polygons (None when empty)."""
    if len(b) >= 3:
        poly: PqPolygon | None = a
        for ap, aq, rhs in to_halfplanes(b).rows:
            poly = clip(poly, ap, aq, rhs)
            if poly is None:
                return None
        return poly
    if len(a) >= 3:
        return intersect(b, a)
    # both degenerate: keep the vertices of each that lie in the other
    keep = [v for v in a.vertices if contains(b, v, 1e-9)]
    keep += [v for v in b.vertices if contains(a, v, 1e-9)]
    return PqPolygon(keep) if keep else None


def _dist_to_segment(pt, a, b) -> float:
    px, py = pt
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0.0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def contains(poly: PqPolygon, pt, eps: float = 1e-9) -> bool:
    xy = _as_xy(pt)
    v = poly.vertices
    if len(v) == 1:
        return math.hypot(xy[0] - v[0][0], xy[1] - v[0][1]) <= eps
    if len(v) == 2:
        return _dist_to_segment(xy, v[0], v[1]) <= eps
    return bool(np.all(-to_halfplanes(poly).slack(xy) <= eps))


def is_subset(inner: PqPolygon, outer: PqPolygon, eps: float = 1e-9) -> bool:
    return all(contains(outer, v, eps) for v in inner.vertices)


def max_excess(inner: PqPolygon, outer: PqPolygon) -> float:
    """Largest violation of `outer` by any vertex of `inner` (0 if nested)."""
    worst = 0.0
    for v in inner.vertices:
        if len(outer) >= 3:
            worst = max(worst, float(np.max(-to_halfplanes(outer).slack(v))))
        elif len(outer) == 2:
            worst = max(worst, _dist_to_segment(v, *outer.vertices))
        else:
            worst = max(worst, math.dist(v, outer.vertices[0]))
    return worst


def area(poly: PqPolygon) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly.array[:, 0], poly.array[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def support(poly: PqPolygon, angle: float) -> float:
    d = np.array([math.cos(angle), math.sin(angle)])
    return float(np.max(poly.array @ d))


def hausdorff(a: PqPolygon, b: PqPolygon, samples: int = 360) -> float:
    """Hausdorff distance of two convex sets via their support functions."""
    th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    ha = (a.array @ d.T).max(axis=0)
    hb = (b.array @ d.T).max(axis=0)
    return float(np.max(np.abs(ha - hb)))


def merge_close(points: Sequence, tol: float = 1e-7) -> list[tuple[float, float]]:
    """Drop points within `tol` of an earlier kept point (order preserved)."""
    kept: list[tuple[float, float]] = []
    for pt in points:
        xy = _as_xy(pt)
        if all(math.dist(xy, k) > tol for k in kept):
            kept.append(xy)
    return kept


def box(p_lo: float, p_hi: float, q_lo: float, q_hi: float) -> PqPolygon:
    return PqPolygon([(p_lo, q_lo), (p_hi, q_lo), (p_hi, q_hi), (p_lo, q_hi)])
