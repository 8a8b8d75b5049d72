import math

import numpy as np
import pytest

from hrteam.geometry import (
    ATOL,
    GeometryError,
    KeepOutSet,
    Polytope2,
    build_keep_out,
    contains,
    minkowski_sum,
    pontryagin_diff,
    regular_octagon,
    safety_region,
)

# ---------------------------------------------------------------------------
# Independent oracles. The implementation computes Minkowski sums as hulls of
# vertex sums and erosions via per-facet support offsets; the oracles below
# check both against the definitions instead (support-function arithmetic and
# direct set membership), so a shared bug cannot hide.
# ---------------------------------------------------------------------------


def support_oracle(poly: Polytope2, d: np.ndarray) -> float:
    return float(np.max(poly.vertices @ d))


def erosion_membership_oracle(p: Polytope2, q: Polytope2, y: np.ndarray) -> bool:
    """y is in p ~ q iff the translate y (+) q fits inside p."""
    return all(
        float(n @ y) + support_oracle(q, n) <= b + ATOL for n, b in zip(p.A, p.b)
    )


def random_poly(rng: np.random.Generator) -> Polytope2:
    kind = rng.integers(3)
    if kind == 0:
        return Polytope2.box(rng.uniform(-3, 3, 2), rng.uniform(0.05, 2.0, 2))
    if kind == 1:
        return regular_octagon(rng.uniform(0.1, 3.0)).translate(rng.uniform(-2, 2, 2))
    pts = rng.uniform(-3, 3, (rng.integers(3, 9), 2))
    return Polytope2.from_vertices(pts)


def test_minkowski_support_additivity_500_random_instances():
    rng = np.random.default_rng(20260816)
    for _ in range(250):
        p, q = random_poly(rng), random_poly(rng)
        s = minkowski_sum(p, q)
        for _ in range(8):
            ang = rng.uniform(0, 2 * math.pi)
            d = np.array([math.cos(ang), math.sin(ang)])
            assert abs(s.support(d) - (support_oracle(p, d) + support_oracle(q, d))) < 1e-7


def test_erosion_matches_membership_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(120):
        p = random_poly(rng)
        q = Polytope2.box((0, 0), rng.uniform(0.01, 0.4, 2))
        er = pontryagin_diff(p, q)
        for _ in range(12):
            y = rng.uniform(-4, 4, 2)
            want = erosion_membership_oracle(p, q, y)
            got = er is not None and er.contains(y, tol=1e-7)
            # skip razor-edge samples where the two tolerances may disagree
            margin = min(
                abs(float(n @ y) + support_oracle(q, n) - b) for n, b in zip(p.A, p.b)
            )
            if margin > 1e-6:
                assert got == want
                checked += 1
    assert checked > 800


def test_erosion_then_dilation_is_contained_in_original():
    rng = np.random.default_rng(99)
    for _ in range(250):
        p = random_poly(rng)
        q = Polytope2.box((0, 0), rng.uniform(0.01, 0.5, 2))
        er = pontryagin_diff(p, q)
        if er is None:
            continue
        back = minkowski_sum(er, q)
        for v in back.vertices:
            assert p.contains(v, tol=1e-7)


def test_minkowski_with_origin_point_is_identity():
    rng = np.random.default_rng(3)
    origin = Polytope2.from_vertices([(0.0, 0.0)])
    for _ in range(50):
        p = random_poly(rng)
        s = minkowski_sum(p, origin)
        assert np.allclose(s.vertices, p.vertices, atol=1e-9)
        er = pontryagin_diff(p, origin)
        assert er is not None
        assert np.allclose(er.vertices, p.vertices, atol=1e-7)


# ---------------------------------------------------------------------------
# Frozen expected values.
# ---------------------------------------------------------------------------


def test_box_erosion_exact():
    arena = Polytope2.box((3.5, 3.5), (3.5, 3.5))  # [0,7]^2
    robot = Polytope2.box((0, 0), (0.25, 0.25))
    er = pontryagin_diff(arena, robot)
    lo, hi = er.bounding_box()
    assert np.allclose(lo, [0.25, 0.25], atol=1e-12)
    assert np.allclose(hi, [6.75, 6.75], atol=1e-12)


def test_box_minkowski_exact():
    a = Polytope2.box((1, 1), (0.5, 0.25))
    b = Polytope2.box((0, 0), (0.25, 0.25))
    s = minkowski_sum(a, b)
    lo, hi = s.bounding_box()
    assert np.allclose(lo, [0.25, 0.5], atol=1e-12)
    assert np.allclose(hi, [1.75, 1.5], atol=1e-12)


def test_octagon_offsets_and_membership():
    o = regular_octagon(4.0)
    apothem = 4.0 * math.cos(math.pi / 8)
    assert abs(apothem - 3.69552) < 1e-4
    assert np.allclose(o.b, apothem, atol=1e-9)
    assert len(o.vertices) == 8
    assert o.contains((3.69, 0.0))
    assert not o.contains((0.0, 3.70))


def test_octagon_plus_box_vertex_structure():
    # The octagon's axis-aligned edges are parallel to the box edges, so those
    # edge pairs merge: the sum keeps 8 extreme vertices, and each axis-facing
    # edge lengthens by the box side.
    s = minkowski_sum(regular_octagon(1.0), Polytope2.box((0, 0), (0.5, 0.5)))
    assert len(s.vertices) == 8
    assert abs(s.support((1.0, 0.0)) - (math.cos(math.pi / 8) + 0.5)) < 1e-12
    # A rotated octagon (vertices on the axes) shares no edge direction with
    # the box, so there the full 8 + 4 = 12 vertices survive.
    ang = np.arange(8) * math.pi / 4
    rot = Polytope2.from_vertices(np.stack([np.cos(ang), np.sin(ang)], axis=1))
    s2 = minkowski_sum(rot, Polytope2.box((0, 0), (0.5, 0.5)))
    assert len(s2.vertices) == 12


def test_safety_region_dimensions():
    human = Polytope2.box((0, 0), (0.205, 0.145))  # 0.41 x 0.29 body
    r = safety_region(human, v=1.0, T=1.0)
    lo, hi = r.bounding_box()
    assert np.allclose(hi - lo, [2.41, 2.29], atol=1e-12)


def test_keep_out_of_arena_with_centered_obstacle():
    arena = Polytope2.box((3.5, 3.5), (3.5, 3.5))
    obstacle = Polytope2.box((3.5, 3.5), (0.5, 0.5))  # 1x1 cell at the center
    robot = Polytope2.box((0, 0), (0.25, 0.25))
    ko = build_keep_out(arena, [obstacle], [], robot)
    lo, hi = ko.bounds.bounding_box()
    assert np.allclose(lo, [0.25, 0.25], atol=1e-12)
    assert np.allclose(hi, [6.75, 6.75], atol=1e-12)
    plo, phi = ko.pieces[0].bounding_box()
    assert np.allclose(plo, [2.75, 2.75], atol=1e-12)
    assert np.allclose(phi, [4.25, 4.25], atol=1e-12)
    assert not ko.free((3.5, 3.5))
    assert not ko.free((4.25, 3.5))  # touching the dilated piece blocks
    assert ko.free((4.2500001, 3.5))
    assert not ko.free((0.2, 0.2))  # outside the eroded arena


def test_keep_out_includes_dilated_human_body():
    arena = Polytope2.box((3.5, 3.5), (3.5, 3.5))
    human = Polytope2.box((1.0, 1.0), (0.205, 0.145))
    robot = Polytope2.box((0, 0), (0.25, 0.25))
    ko = build_keep_out(arena, [], [human], robot)
    plo, phi = ko.pieces[0].bounding_box()
    assert np.allclose(plo, [0.545, 0.605], atol=1e-12)
    assert np.allclose(phi, [1.455, 1.395], atol=1e-12)


def test_keep_out_monotone_in_bodies():
    rng = np.random.default_rng(11)
    arena = Polytope2.box((3.5, 3.5), (3.5, 3.5))
    robot = Polytope2.box((0, 0), (0.25, 0.25))
    body = Polytope2.box((2.0, 2.0), (0.3, 0.3))
    small = build_keep_out(arena, [], [], robot)
    big = build_keep_out(arena, [], [body], robot)
    for _ in range(200):
        y = rng.uniform(0, 7, 2)
        if big.free(y):
            assert small.free(y)


# ---------------------------------------------------------------------------
# Structural behavior.
# ---------------------------------------------------------------------------


def test_empty_erosion_returns_none():
    p = Polytope2.box((0, 0), (0.2, 0.2))
    q = Polytope2.box((0, 0), (0.5, 0.5))
    assert pontryagin_diff(p, q) is None


def test_redundant_halfspace_does_not_change_membership():
    p = Polytope2.box((0, 0), (1, 1))
    A = np.vstack([p.A, [[1.0, 0.0]]])
    b = np.concatenate([p.b, [5.0]])  # x <= 5 is redundant
    q = Polytope2.from_halfspaces(A, b)
    rng = np.random.default_rng(5)
    for _ in range(200):
        y = rng.uniform(-2, 2, 2)
        assert p.contains(y) == q.contains(y)


def test_degenerate_inputs_accepted():
    point = Polytope2.from_vertices([(1.0, 2.0)])
    seg = Polytope2.from_vertices([(0.0, 0.0), (2.0, 0.0), (1.0, 0.0)])
    assert point.contains((1, 2)) and not point.contains((1.001, 2))
    assert seg.contains((1.5, 0.0)) and not seg.contains((1.5, 0.01))
    s = minkowski_sum(seg, Polytope2.box((0, 0), (0.1, 0.1)))
    lo, hi = s.bounding_box()
    assert np.allclose(lo, [-0.1, -0.1], atol=1e-12)
    assert np.allclose(hi, [2.1, 0.1], atol=1e-12)


def test_intersects_touching_counts():
    a = Polytope2.box((0, 0), (1, 1))
    b = Polytope2.box((2, 0), (1, 1))  # shares the x=1 edge
    c = Polytope2.box((2.5, 0), (0.4, 0.4))
    assert a.intersects(b)
    assert not a.intersects(c)
    assert a.intersects(Polytope2.box((0.5, 0.5), (0.1, 0.1)))  # containment


def test_unit_normals_and_canonical_vertex_order():
    rng = np.random.default_rng(17)
    for _ in range(50):
        p = random_poly(rng)
        assert np.allclose(np.linalg.norm(p.A, axis=1), 1.0, atol=1e-12)
        # canonical: first vertex is the lexicographic minimum
        idx = np.lexsort((p.vertices[:, 1], p.vertices[:, 0]))[0]
        assert idx == 0
        # CCW orientation: signed area positive for full-dimensional polytopes
        if len(p.vertices) >= 3:
            v = p.vertices
            area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
            assert area > 0


def test_invalid_inputs_raise():
    with pytest.raises(GeometryError):
        Polytope2.from_vertices(np.zeros((0, 2)))
    with pytest.raises(GeometryError):
        Polytope2.box((0, 0), (-1, 1))
    with pytest.raises(GeometryError):
        regular_octagon(0.0)
    with pytest.raises(GeometryError):
        safety_region(Polytope2.box((0, 0), (1, 1)), v=1.0, T=0.0)
    with pytest.raises(GeometryError):
        build_keep_out(
            Polytope2.box((0, 0), (0.1, 0.1)), [], [], Polytope2.box((0, 0), (1, 1))
        )
