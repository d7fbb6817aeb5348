import math

import pytest
from hypothesis import given, strategies as st

from dernoe import der, geometry as g

GEN = der.Resource("gen", "b2", "synchronous_generator", 0.0, 1.0, -0.6, 0.6,
                   ramp_up=0.033, ramp_down=0.033, t_act_plus=25, t_act_minus=25, rho_p=380, rho_q=38)
BESS = der.Resource("bess", "b2", "inverter_storage", -0.5, 0.5, -0.5, 0.5, s_rating=0.5,
                    ramp_up=1.67, ramp_down=1.67, t_act_plus=0.5, t_act_minus=0.5,
                    e_min=0.0, e_max=1.0, e=0.3, rho_p=190, rho_q=19)


def test_generator_rectangle():
    poly = der.capability_set(GEN)
    assert poly == g.box(0, 1, -0.6, 0.6)
    assert poly.p_range() == (0.0, 1.0)


def test_bess_disc_inscribed():
    poly = der.capability_set(BESS, 16)
    assert poly.p_range() == pytest.approx((-0.5, 0.5), abs=1e-15)
    assert all(math.hypot(p, q) <= 0.5 + 1e-12 for p, q in poly.vertices)


def test_disc_area_limit():
    areas = [g.area(der.capability_set(BESS, n)) for n in (8, 16, 64, 1024)]
    assert areas == sorted(areas)
    assert areas[-1] == pytest.approx(math.pi * 0.25, rel=1e-5)


def test_arc_segments_minimum():
    with pytest.raises(der.ResourceError):
        der.capability_set(BESS, 4)


def test_box_outside_disc():
    bad = der.Resource("x", "b", "inverter_pv", 2, 3, 2, 3, s_rating=1.0)
    with pytest.raises(der.ResourceError):
        der.capability_set(bad)


def test_pv_box_clipped_by_disc():
    pv = der.Resource("pv", "b", "inverter_pv", 0, 1.0, -0.3, 0.3, s_rating=1.0)
    poly = der.capability_set(pv)
    assert poly.p_range()[1] == pytest.approx(1.0)
    assert poly.q_range() == pytest.approx((-0.3, 0.3))
    assert g.contains(poly, (math.sqrt(1 - 0.09), 0.3), 1e-12)


def test_offline_generator_includes_origin():
    off = der.Resource("g", "b", "synchronous_generator", 0.2, 1.0, 0, 0.5, committed=False)
    assert g.contains(der.capability_set(off), (0, 0))


def test_ramp_spot_checks():
    assert der.deviation_bounds_ramp(GEN, 25)[1] == 0.0
    assert der.deviation_bounds_ramp(GEN, 55)[1] == pytest.approx(0.99, abs=1e-12)
    assert der.deviation_bounds_ramp(BESS, 0.8)[1] == 0.5
    assert der.deviation_bounds_ramp(BESS, 0.8)[0] == -0.5


def test_ramp_clip_with_dispatch():
    lo, hi = der.deviation_bounds_ramp(GEN, 1000, p_lambda=0.4)
    assert (lo, hi) == pytest.approx((-0.4, 0.6))


def test_energy_spot_checks():
    assert der.deviation_bounds_energy(BESS, 4.0, 0.5)[1] == pytest.approx(0.075, abs=1e-15)
    assert der.deviation_bounds_energy(BESS, 0.0, 0.5) == (-0.5, 0.5)
    full = der.Resource(**{**BESS.__dict__, "e": 1.0})
    assert der.deviation_bounds_energy(full, 1.0, 0.5)[0] == 0.0
    with pytest.raises(der.ResourceError):
        der.deviation_bounds_energy(GEN, 1.0, 0.5)


def test_cost():
    assert der.deviation_cost(BESS, 0.5, 0) == 95
    assert der.deviation_cost(GEN, 1.0, 0) == 380
    assert der.deviation_cost(GEN, 0, 0) == 0


@given(st.floats(0, 500), st.floats(0, 500), st.floats(-0.5, 0.5))
def test_ramp_monotone(t1, t2, p_lambda):
    t1, t2 = sorted((t1, t2))
    for r in (GEN, BESS):
        a = der.deviation_bounds_ramp(r, t1, p_lambda)
        b = der.deviation_bounds_ramp(r, t2, p_lambda)
        assert b[0] <= a[0] <= 0.0 <= a[1] <= b[1]


@given(st.floats(1e-6, 100), st.floats(1e-6, 100), st.floats(-0.5, 0.5))
def test_energy_antitone(p1, p2, p_lambda):
    p1, p2 = sorted((p1, p2))
    a = der.deviation_bounds_energy(BESS, p1, 0.5, p_lambda)
    b = der.deviation_bounds_energy(BESS, p2, 0.5, p_lambda)
    assert a[0] <= b[0] <= 0.0 <= b[1] <= a[1]


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 10))
def test_cost_homogeneous(dp, dq, k):
    assert der.deviation_cost(GEN, k * dp, k * dq) == pytest.approx(k * der.deviation_cost(GEN, dp, dq))


def test_invalid_resource():
    bad = der.Resource("x", "b", "inverter_storage", 1, 0, 0, 1)
    assert "p_min > p_max" in bad.problems()
    with pytest.raises(der.ResourceError):
        der.capability_set(bad)


def test_snapshot_resolve():
    pv = der.Resource("pv", "b", "inverter_pv", 0, 1.0, -0.3, 0.3, s_rating=1.0)
    snap = der.Snapshot(0.5, soc={"bess": 0.2}, pv_available={"pv": 0.4})
    assert snap.resolve(pv).p_max == 0.4
    assert snap.resolve(BESS).e == 0.2
    with pytest.raises(der.ResourceError):
        der.Snapshot(0.0)
