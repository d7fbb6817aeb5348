import json

import pytest

from dernoe import envelopes as env
from dernoe import fixtures
from dernoe.geometry import area, contains, from_halfplanes, hausdorff, is_subset
from dernoe.network import Bus, Network, resolved_resources


@pytest.fixture(scope="module")
def canon():
    return fixtures.canonical()


@pytest.fixture(scope="module")
def feas(canon):
    net, snap = canon
    return env.boundary_sweep(net, snap, env.EnvelopeRequest("feasibility", K=10))


def test_capability_range(canon):
    net, snap = canon
    noe = env.capability_noe(resolved_resources(net, snap))
    assert noe.boundary.p_range() == pytest.approx((-1.5, 0.5), abs=1e-12)


def test_k1_has_six_records(canon):
    net, snap = canon
    noe = env.boundary_sweep(net, snap, env.EnvelopeRequest("feasibility", K=1))
    assert noe.meta["points_attempted"] == 6
    assert area(noe.boundary) > 0


def test_density_sets_k(canon):
    net, snap = canon
    noe = env.boundary_sweep(net, snap, env.EnvelopeRequest("feasibility", density=5))
    lo, hi = noe.meta["q_range"]
    assert noe.meta["k"] == max(1, -(-round(5 * (hi - lo), 9) // 1))
    assert noe.meta["points_attempted"] == 4 + 2 * noe.meta["k"]


def test_feasibility_respects_capability(canon, feas):
    net, snap = canon
    cap = env.capability_noe(resolved_resources(net, snap))
    # import = load - injection + losses, and losses are never negative
    assert feas.boundary.p_range()[0] >= cap.boundary.p_range()[0] + 0.47 - 1e-6


def test_dispatch_point_inside(feas):
    assert feas.meta["dispatch_feasible"]
    assert contains(feas.boundary, tuple(feas.meta["dispatch_import"]), 1e-9)


def test_frames_round_trip(feas):
    dev = feas.in_frame("deviation_from_dispatch")
    assert contains(dev.boundary, (0.0, 0.0), 1e-9)
    back = dev.in_frame("absolute_import")
    assert hausdorff(back.boundary, feas.boundary) < 1e-12


def test_halfplanes_describe_boundary(feas):
    hp = feas.halfplanes
    for p, q in feas.boundary.vertices:
        assert all(a * p + b * q <= c + 1e-9 for a, b, c in hp.rows)
    rebuilt = from_halfplanes(hp)
    assert area(rebuilt) == pytest.approx(area(feas.boundary), rel=1e-9)


def test_json_round_trip(feas):
    doc = json.loads(json.dumps(feas.to_json()))
    again = env.Noe.from_json(doc)
    assert again.boundary == feas.boundary
    with pytest.raises(env.EnvelopeError):
        env.Noe.from_json({"kind": "feasibility"})


def test_no_wall_time_by_default(feas):
    assert feas.meta["wall_time_s"] is None


@pytest.mark.parametrize("kw", [
    {"kind": "ramp"},
    {"kind": "feasibility", "tau": 10},
    {"kind": "economic", "cost": -1},
    {"kind": "nope"},
    {"kind": "feasibility", "K": 0},
])
def test_request_validation(kw):
    with pytest.raises(env.EnvelopeError):
        env.EnvelopeRequest(**kw)


def test_parallel_matches_serial(canon):
    net, snap = canon
    req = env.EnvelopeRequest("ramp", tau=60, K=4)
    a = env.boundary_sweep(net, snap, req, jobs=1)
    b = env.boundary_sweep(net, snap, req, jobs=2)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_flexibility_nesting_canonical(canon):
    net, snap = canon
    fam = env.flexibility_family(net, snap, 300, 1 / 6, 80, K=6)
    assert env.nesting_violations(fam) == []
    raw = env.flexibility_family(net, snap, 300, 1 / 6, 80, K=6, nested=False)
    # absorption only adds exact points, so it can only enlarge each hull
    for kind in fam:
        assert is_subset(raw[kind].boundary, fam[kind].boundary, 1e-9)


def test_ramp_stack_grows(canon):
    net, snap = canon
    stack = env.contour_stack(net, snap, "ramp", [1, 30, 300], K=4)
    assert env.stack_violations(stack, "ramp") == []
    assert stack.axis == "tau"


def test_transparent_aggregation(canon, feas):
    net, snap = canon
    up = Network(net.root, (Bus(net.root, 33.0),), (), (), ())
    agg = env.aggregate_upstream([feas], up, snap, env.EnvelopeRequest("feasibility", K=10))
    assert hausdorff(agg.boundary, feas.boundary) < 1e-6


def test_oracle_points_feasible_and_seeded(canon):
    net, snap = canon
    a = env.monte_carlo_oracle(net, snap, 2000, seed=4)
    b = env.monte_carlo_oracle(net, snap, 2000, seed=4)
    assert a.feasible == len(a.points) > 0
    assert (a.points == b.points).all()


def test_window_clipping_shrinks_cloud(canon):
    net, snap = canon
    areas = [area(env.monte_carlo_oracle(net, snap, 4000, seed=1, windows=env.EnvelopeRequest("ramp", tau=t)).hull)
             for t in (1, 30)]
    full = env.monte_carlo_oracle(net, snap, 4000, seed=1)
    assert areas[0] < areas[1] < area(full.hull)
    with pytest.raises(env.EnvelopeError):
        env.monte_carlo_oracle(net, snap, 0)
