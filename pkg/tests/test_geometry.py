import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dernoe import geometry as g


def random_convex(rng, n_max=12, scale=1.0):
    n = int(rng.integers(3, n_max + 1))
    pts = rng.normal(size=(n, 2)) * scale + rng.normal(size=2)
    return g.convex_hull([tuple(p) for p in pts])


@st.composite
def convex_polygons(draw, max_pts=12):
    n = draw(st.integers(1, max_pts))
    coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
    pts = [(draw(coords), draw(coords)) for _ in range(n)]
    return g.convex_hull(pts)


UNIT = g.box(-0.5, 0.5, -0.5, 0.5)


def test_hull_removes_interior_point():
    hull = g.convex_hull([(0, 0), (1, 0), (0, 1), (0.2, 0.2)])
    assert set(hull.vertices) == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}
    assert len(hull) == 3


def test_hull_single_point():
    assert g.convex_hull([(3, -1)]).vertices == ((3.0, -1.0),)


def test_hull_empty_raises():
    with pytest.raises(g.GeometryError):
        g.convex_hull([])


def test_hull_drops_collinear():
    hull = g.convex_hull([(0, 0), (0.5, 0), (1, 0), (1, 1), (0, 1)])
    assert len(hull) == 4


def test_hull_is_ccw():
    rng = np.random.default_rng(3)
    poly = random_convex(rng)
    v = poly.array
    for i in range(len(v)):
        a, b, c = v[i], v[(i + 1) % len(v)], v[(i + 2) % len(v)]
        assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


def test_disc_hull_area_monte_carlo():
    # Monte Carlo oracle: the hull of disc samples never exceeds pi and grows
    rng = np.random.default_rng(0)
    r = np.sqrt(rng.random(1000))
    th = rng.random(1000) * 2 * np.pi
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    areas = [g.area(g.convex_hull([tuple(p) for p in pts[:n]])) for n in (10, 100, 1000)]
    assert areas[-1] <= math.pi
    assert areas == sorted(areas)
    assert areas[-1] > 0.95 * math.pi


def test_minkowski_squares():
    out = g.minkowski_sum(g.box(-1, 1, -1, 1), UNIT)
    assert out == g.box(-1.5, 1.5, -1.5, 1.5)


def test_minkowski_identity():
    rng = np.random.default_rng(1)
    poly = random_convex(rng)
    assert g.minkowski_sum(poly, g.PqPolygon([(0, 0)])) == poly


def test_minkowski_generator_bess_range():
    gen = g.box(0, 1, -0.6, 0.6)
    bess = g.box(-0.5, 0.5, -0.5, 0.5)
    lo, hi = g.minkowski_sum(gen, bess).p_range()
    assert (lo, hi) == (-0.5, 1.5)


def test_minkowski_unit_squares_area():
    assert g.area(g.minkowski_sum(UNIT, UNIT)) == pytest.approx(4.0, abs=1e-12)
    assert g.area(g.minkowski_sum_bruteforce(UNIT, UNIT)) == pytest.approx(4.0, abs=1e-12)


def test_minkowski_matches_bruteforce_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a, b = random_convex(rng), random_convex(rng)
        fast, slow = g.minkowski_sum(a, b), g.minkowski_sum_bruteforce(a, b)
        assert abs(g.area(fast) - g.area(slow)) <= 1e-10 * g.area(slow)
        assert len(fast) <= len(a) + len(b)


def test_minkowski_with_segments():
    seg = g.PqPolygon([(0, 0), (1, 1)])
    out = g.minkowski_sum(seg, UNIT)
    assert out == g.minkowski_sum_bruteforce(seg, UNIT)
    seg2 = g.PqPolygon([(0, 0), (1, 0)])
    assert g.minkowski_sum(seg, seg2) == g.PqPolygon([(0, 0), (1, 0), (2, 1), (1, 1)])


@settings(max_examples=200, deadline=None)
@given(convex_polygons(), convex_polygons(), st.floats(0, 2 * math.pi))
def test_support_additivity(a, b, theta):
    s = g.minkowski_sum(a, b)
    lhs = g.support(s, theta)
    rhs = g.support(a, theta) + g.support(b, theta)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


@settings(max_examples=100, deadline=None)
@given(convex_polygons(), convex_polygons())
def test_brunn_minkowski(a, b):
    s = g.minkowski_sum(a, b)
    assert math.sqrt(g.area(s)) >= math.sqrt(g.area(a)) + math.sqrt(g.area(b)) - 1e-9


@settings(max_examples=100, deadline=None)
@given(convex_polygons())
def test_hull_idempotent(p):
    assert g.convex_hull(p.vertices) == p


def test_support_values():
    assert g.support(UNIT, 0.0) == 0.5
    assert all(g.support(g.PqPolygon([(0, 0)]), t) == 0.0 for t in np.linspace(0, 6, 13))


def test_halfplanes_unit_square():
    hp = g.to_halfplanes(UNIT)
    assert len(hp) == 4
    assert sorted(hp.rows) == sorted([(0.0, -1.0, 0.5), (1.0, 0.0, 0.5), (0.0, 1.0, 0.5), (-1.0, 0.0, 0.5)])


def test_halfplanes_triangle():
    hp = g.to_halfplanes(g.convex_hull([(0, 0), (1, 0), (0, 1)]))
    assert len(hp) == 3
    s = 1 / math.sqrt(2)
    hyp = [r for r in hp.rows if r[0] > 0 and r[1] > 0]
    assert len(hyp) == 1
    assert hyp[0] == pytest.approx((s, s, s), abs=1e-15)
    for ap, aq, _ in hp.rows:
        assert math.hypot(ap, aq) == pytest.approx(1.0, abs=1e-15)


def test_halfplanes_degenerate_raises():
    with pytest.raises(g.GeometryError):
        g.to_halfplanes(g.PqPolygon([(0, 0), (1, 1)]))


def test_halfplane_roundtrip_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        poly = random_convex(rng, n_max=40)
        hp = g.to_halfplanes(poly)
        assert np.all(hp.A @ poly.array.T - hp.b[:, None] <= 1e-9)
        back = g.from_halfplanes(hp)
        assert abs(g.area(back) - g.area(poly)) <= 1e-6 * g.area(poly)


def test_halfplane_description_degenerate():
    seg = g.PqPolygon([(0, 0), (2, 1)])
    a_ub, b_ub, a_eq, b_eq = g.halfplane_description(seg)
    mid = np.array([1.0, 0.5])
    assert np.all(a_ub @ mid <= b_ub + 1e-12)
    assert np.allclose(a_eq @ mid, b_eq)
    assert not np.all(a_ub @ np.array([3.0, 1.5]) <= b_ub + 1e-12)
    pt = g.PqPolygon([(1, 2)])
    _, _, a_eq, b_eq = g.halfplane_description(pt)
    assert np.allclose(np.linalg.solve(a_eq, b_eq), [1, 2])


def test_contains():
    assert g.contains(UNIT, (0, 0), 1e-9)
    assert not g.contains(UNIT, (2, 0), 1e-9)
    assert g.contains(UNIT, (0.5, 0.5), 1e-9)
    assert g.contains(g.PqPolygon([(0, 0), (1, 1)]), (0.5, 0.5))
    assert not g.contains(g.PqPolygon([(0, 0)]), (0.5, 0.5))


def test_is_subset():
    assert g.is_subset(UNIT, UNIT)
    assert g.is_subset(UNIT, g.box(-1, 1, -1, 1))
    assert not g.is_subset(g.box(-1, 1, -1, 1), UNIT)


def test_area():
    assert g.area(g.box(0, 1, 0, 1)) == 1.0
    assert g.area(g.PqPolygon([(1, 1)])) == 0.0


def test_intersect_reflection():
    tri = g.convex_hull([(-1, 0), (2, -1), (2, 1)])
    mirrored = g.PqPolygon((-p, q) for p, q in tri.vertices)
    sym = g.intersect(tri, mirrored)
    lo, hi = sym.p_range()
    assert lo == pytest.approx(-hi)
    assert g.is_subset(sym, tri, 1e-12)


def test_intersect_disjoint():
    assert g.intersect(UNIT, g.box(2, 3, 2, 3)) is None


def test_from_halfplanes_unbounded():
    with pytest.raises(g.GeometryError):
        g.from_halfplanes(g.HalfPlaneSet(((1.0, 0.0, 1.0),)))


def test_nonfinite_rejected():
    with pytest.raises(g.GeometryError):
        g.PqPolygon([(float("nan"), 0)])
    with pytest.raises(g.GeometryError):
        g.PqPoint(float("inf"), 0)
