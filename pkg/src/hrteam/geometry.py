"""2D convex polytopes in half-space form and the set operations built on them.

Everything here works on closed, bounded, convex sets in the plane. A polytope
stores both representations: outward unit normals with offsets (A y <= b) and
the vertex list in counter-clockwise order. Degenerate sets (points, segments)
are legal values; the empty set is represented by ``None`` where an operation
can produce it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Geometric comparisons share one absolute tolerance (meters).
ATOL = 1e-9


class GeometryError(ValueError):
    pass


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain. Returns hull vertices in CCW order.

    Collinear points interior to an edge are dropped. Handles 1- and 2-point
    (degenerate) inputs.
    """
    order = np.lexsort((points[:, 1], points[:, 0]))
    sorted_pts = points[order]
    kept = [sorted_pts[0]]
    for p in sorted_pts[1:]:  # drop near-duplicates without quantizing coordinates
        if abs(p[0] - kept[-1][0]) > ATOL or abs(p[1] - kept[-1][1]) > ATOL:
            kept.append(p)
    pts = np.array(kept)
    if len(pts) == 1:
        return pts
    if len(pts) == 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:  # all points collinear: keep the two extremes
        return np.array([pts[0], pts[-1]]) if len(hull) != 1 else hull
    return hull


def _canonical(vertices: np.ndarray) -> np.ndarray:
    """Rotate the CCW vertex ring to start at the lexicographic minimum."""
    if len(vertices) <= 1:
        return vertices
    start = int(np.lexsort((vertices[:, 1], vertices[:, 0]))[0])
    return np.roll(vertices, -start, axis=0)


class Polytope2:
    """Closed bounded convex polytope: {y : A y <= b} with unit-norm rows of A.

    Instances are value-like: construct once, never mutate. ``vertices`` is the
    CCW ring starting at the lexicographically smallest vertex, which makes the
    representation canonical and comparisons deterministic.
    """

    __slots__ = ("A", "b", "vertices")

    def __init__(self, A: np.ndarray, b: np.ndarray, vertices: np.ndarray):
        self.A = A
        self.b = b
        self.vertices = vertices
        for arr in (A, b, vertices):
            arr.setflags(write=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_vertices(cls, points) -> "Polytope2":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise GeometryError("a polytope needs at least one vertex")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("non-finite vertex")
        hull = _canonical(_convex_hull(pts))
        A, b = cls._halfspaces_of(hull)
        return cls(A, b, hull)

    @classmethod
    def from_halfspaces(cls, A, b) -> "Polytope2 | None":
        """Vertex-enumerate A y <= b. Returns None when the set is empty.

        The input must describe a bounded set; unbounded inputs raise.
        """
        A = np.asarray(A, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1)
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms < ATOL):
            raise GeometryError("zero-norm halfspace row")
        A = A / norms[:, None]
        b = b / norms
        m = len(A)
        pts = []
        for i in range(m):
            for j in range(i + 1, m):
                det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
                if abs(det) < 1e-12:
                    continue
                p = np.linalg.solve(A[[i, j]], b[[i, j]])
                if np.all(A @ p <= b + 10 * ATOL):
                    pts.append(p)
        if not pts:
            return None
        poly = cls.from_vertices(np.array(pts))
        if np.any(np.abs(poly.vertices) > 1e12):
            raise GeometryError("halfspace set is unbounded")
        return poly

    @staticmethod
    def _halfspaces_of(hull: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if len(hull) == 1:
            p = hull[0]
            A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
            return A, A @ p
        if len(hull) == 2:
            p0, p1 = hull
            d = p1 - p0
            d = d / np.linalg.norm(d)
            n = np.array([-d[1], d[0]])
            A = np.array([n, -n, d, -d])
            b = np.array([n @ p0, -(n @ p0), d @ p1, -(d @ p0)])
            return A, b
        rows, offs = [], []
        k = len(hull)
        for i in range(k):
            p0, p1 = hull[i], hull[(i + 1) % k]
            e = p1 - p0
            n = np.array([e[1], -e[0]])  # outward for CCW rings
            n = n / np.linalg.norm(n)
            rows.append(n)
            offs.append(n @ p0)
        return np.array(rows), np.array(offs)

    @classmethod
    def box(cls, center, half_extents) -> "Polytope2":
        c = np.asarray(center, dtype=float)
        h = np.asarray(half_extents, dtype=float)
        if np.any(h < 0):
            raise GeometryError("negative half-extent")
        corners = c + np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * h
        return cls.from_vertices(corners)

    # -- queries -----------------------------------------------------------

    def contains(self, y, tol: float = ATOL) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(self.A @ y <= self.b + tol))

    def support(self, d) -> float:
        """max over the set of <d, y> (support function)."""
        return float(np.max(self.vertices @ np.asarray(d, dtype=float)))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def translate(self, t) -> "Polytope2":
        return Polytope2.from_vertices(self.vertices + np.asarray(t, dtype=float))

    def reflect(self) -> "Polytope2":
        """Point reflection through the origin (-P)."""
        return Polytope2.from_vertices(-self.vertices)

    def intersects(self, other: "Polytope2", tol: float = ATOL) -> bool:
        """Closed-set intersection test: touching boundaries count."""
        A = np.vstack([self.A, other.A])
        b = np.concatenate([self.b, other.b])
        m = len(A)
        # Any nonempty intersection of two bounded polytopes contains a point
        # that is the intersection of two active constraints, or a vertex of
        # one polytope inside the other (covered: vertices are themselves
        # pairwise constraint intersections of the stacked system).
        for i in range(m):
            for j in range(i + 1, m):
                det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
                if abs(det) < 1e-12:
                    continue
                p = np.linalg.solve(A[[i, j]], b[[i, j]])
                if np.all(A @ p <= b + tol):
                    return True
        return False

    def __repr__(self) -> str:
        return f"Polytope2({len(self.vertices)} vertices)"


# -- set operations ---------------------------------------------------------


def minkowski_sum(p: Polytope2, q: Polytope2) -> Polytope2:
    """p (+) q, computed exactly as the hull of pairwise vertex sums."""
    sums = p.vertices[:, None, :] + q.vertices[None, :, :]
    return Polytope2.from_vertices(sums.reshape(-1, 2))


def pontryagin_diff(p: Polytope2, q: Polytope2) -> Polytope2 | None:
    """p (~) q = {y : y (+) q subset of p}; None when erosion empties p.

    Per-facet: each offset of p shrinks by q's support in that facet's normal.
    """
    b = p.b - np.array([q.support(n) for n in p.A])
    return Polytope2.from_halfspaces(p.A, b)


def regular_octagon(radius: float) -> Polytope2:
    """Regular octagon with circumradius ``radius``, facet normals on both axes.

    Axis-facet offsets equal radius*cos(pi/8) (the apothem).
    """
    if radius <= 0:
        raise GeometryError("octagon radius must be positive")
    ang = np.pi / 8 + np.arange(8) * np.pi / 4
    return Polytope2.from_vertices(radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))


def contains(p: Polytope2, y, tol: float = ATOL) -> bool:
    return p.contains(y, tol)


def safety_region(human_shape: Polytope2, v: float, T: float) -> Polytope2:
    """Human body dilated by everywhere it can move within one step: shape (+) [-vT, vT]^2."""
    if v < 0 or T <= 0:
        raise GeometryError("need v >= 0 and T > 0")
    return minkowski_sum(human_shape, Polytope2.box((0.0, 0.0), (v * T, v * T)))


@dataclass(frozen=True)
class KeepOutSet:
    """Free-space description for one moving body: stay inside ``bounds``,
    stay out of every piece in ``pieces`` (each already dilated by the body)."""

    bounds: Polytope2
    pieces: tuple[Polytope2, ...] = field(default_factory=tuple)

    def free(self, y, tol: float = ATOL) -> bool:
        """True when a body centered at y violates nothing (touching a piece counts as blocked)."""
        if not self.bounds.contains(y, tol):
            return False
        return not any(piece.contains(y, tol) for piece in self.pieces)


def build_keep_out(
    arena: Polytope2,
    obstacles: list[Polytope2],
    bodies: list[Polytope2],
    own_shape: Polytope2,
) -> KeepOutSet:
    """Configuration-space free set for a body of shape ``own_shape``.

    The arena erodes by the shape; obstacles and other bodies dilate by the
    reflected shape, so center-point containment tests become exact
    body-overlap tests.
    """
    bounds = pontryagin_diff(arena, own_shape)
    if bounds is None:
        raise GeometryError("arena erodes to the empty set for this body shape")
    mirrored = own_shape.reflect()
    pieces = tuple(minkowski_sum(o, mirrored) for o in [*obstacles, *bodies])
    return KeepOutSet(bounds=bounds, pieces=pieces)
