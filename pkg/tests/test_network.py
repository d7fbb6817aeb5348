import json

import pytest

from dernoe import fixtures
from dernoe.network import (
    Load,
    NetworkError,
    demand_at,
    load_network,
    load_snapshot,
    serialize,
    serialize_snapshot,
    validate,
)


def _doc():
    return serialize(fixtures.canonical_network())


def test_canonical_loads_and_validates():
    net = fixtures.canonical_network()
    assert net.root == "gsp"
    assert [d for d in validate(net) if d.severity == "error"] == []
    assert net.tree().order[0] == "gsp"


def test_round_trip():
    net = fixtures.canonical_network()
    again = load_network(json.dumps(serialize(net)))
    assert serialize(again) == serialize(net)
    snap = fixtures.canonical_snapshot()
    assert serialize_snapshot(load_snapshot(serialize_snapshot(snap), net)) == serialize_snapshot(snap)


def test_schema_error_names_the_path():
    doc = _doc()
    doc["branches"][0]["r_pu"] = "big"
    with pytest.raises(NetworkError, match=r"branches\[0\]"):
        load_network(doc)


def test_unknown_field_rejected():
    doc = _doc()
    doc["buses"][0]["colour"] = "red"
    with pytest.raises(NetworkError):
        load_network(doc)


def test_cycle_detected():
    doc = _doc()
    extra = dict(doc["branches"][-1])
    extra["from"], extra["to"] = "gsp", "b2"
    doc["branches"].append(extra)
    with pytest.raises(NetworkError, match="radial"):
        load_network(doc)


def test_unknown_bus():
    doc = _doc()
    doc["loads"][0]["bus"] = "nowhere"
    with pytest.raises(NetworkError, match="nowhere"):
        load_network(doc)


def test_defaults_filled():
    doc = _doc()
    for b in doc["buses"]:
        b.pop("v_min_pu", None)
        b.pop("v_max_pu", None)
    net = load_network(doc)
    assert all(b.v_min == 0.95 and b.v_max == 1.05 for b in net.buses)


def test_demand_at():
    d = Load("b1", 0.47, 0.22)
    assert demand_at(d, 0.95) == (0.47, 0.22)
    z = Load("b1", 0.47, 0.22, exp_p=2.0, exp_q=2.0, curtail_max=1.0)
    assert demand_at(z, 0.95, 1.0) == (0.0, 0.0)
    p, _ = demand_at(Load("b", 1.0, 0.0, exp_p=2.0), 0.95)
    assert p == pytest.approx(0.9025, abs=1e-15)
    with pytest.raises(NetworkError):
        demand_at(d, 1.0, 0.5)


def test_snapshot_unknown_resource():
    net = fixtures.canonical_network()
    doc = serialize_snapshot(fixtures.canonical_snapshot())
    doc["dispatch"].append({"id": "ghost", "p_mw": 0.0, "q_mvar": 0.0})
    with pytest.raises(NetworkError, match="ghost"):
        load_snapshot(doc, net)


def test_snapshot_soc_out_of_range():
    net = fixtures.canonical_network()
    doc = serialize_snapshot(fixtures.canonical_snapshot())
    doc["soc"] = [{"id": "bess", "e_mwh": 9.0}]
    with pytest.raises(NetworkError, match="bess"):
        load_snapshot(doc, net)


@pytest.mark.parametrize("seed", range(5))
def test_random_instances_are_radial(seed):
    net, _ = fixtures.random_instance(seed)
    assert [d for d in validate(net) if d.severity == "error"] == []
    assert len(net.tree().order) == len(net.buses)
