import pytest

from dernoe import envelopes as env
from dernoe import fixtures, market
from dernoe.geometry import hausdorff


@pytest.fixture(scope="module")
def canon():
    return fixtures.canonical()


def test_catalog_and_unknown_service():
    cat = market.catalog()
    assert {"fast_raise", "delayed_raise", "long_dr", "symmetric_reserve"} <= set(cat)
    with pytest.raises(market.MarketError, match="fast_raise"):
        market.service("slowest_raise")


@pytest.mark.parametrize("kw", [
    {"tau": 0, "psi": 1},
    {"tau": 6, "psi": 1, "direction": "sideways"},
    {"tau": 6, "psi": 1, "direction": "raise", "symmetric": True},
])
def test_service_validation(kw):
    with pytest.raises(market.MarketError):
        market.ServiceSpec("x", **kw)


def test_fast_raise_is_battery_only(canon):
    net, snap = canon
    svc = market.service("fast_raise")
    r = market.service_range(market.technical_noe(net, snap, svc, K=6), svc)
    # the generator cannot move within 6 s; the battery delivers at most its rating
    assert 0.4 < r <= 0.5 + 1e-6


def test_symmetric_reserve(canon):
    net, snap = canon
    noe = market.technical_noe(net, snap, market.service("symmetric_reserve"), K=6)
    lo, hi = noe.boundary.p_range()
    assert lo == pytest.approx(-hi, abs=1e-9)
    assert noe.meta["symmetric"]


def test_bid_stack_shape(canon):
    net, snap = canon
    svc = market.service("long_dr")
    stack = market.bid_stack(net, snap, svc, [27, 80, 325, 475], K=6)
    prices = [p for _, p in stack.tranches]
    assert prices == sorted(prices)
    top = market.service_range(market.commercial_noe(net, snap, svc, 475, K=6), svc)
    assert stack.total_volume == pytest.approx(top, abs=1e-12)


def test_single_level_single_tranche(canon):
    net, snap = canon
    stack = market.bid_stack(net, snap, market.service("delayed_raise"), [80], K=4)
    assert len(stack.tranches) == 1
    vol, price = stack.tranches[0]
    assert price == pytest.approx(80 / vol)


def test_bad_levels(canon):
    net, snap = canon
    for levels in ([], [80, 27]):
        with pytest.raises(market.MarketError):
            market.bid_stack(net, snap, market.service("delayed_raise"), levels)


def test_zero_cost_offers_nothing(canon):
    net, snap = canon
    stack = market.bid_stack(net, snap, market.service("delayed_raise"), [0.0], K=4)
    assert stack.tranches == [] and stack.warnings


def test_delayed_raise_matches_economic_when_windows_slack():
    net, snap = fixtures.canonical_charged()
    svc = market.service("delayed_raise")
    for c in (27, 325):
        a = market.commercial_noe(net, snap, svc, c, K=10)
        b = env.boundary_sweep(net, snap, env.EnvelopeRequest("economic", cost=c, K=10))
        assert hausdorff(a.boundary, b.boundary) <= 1e-4
