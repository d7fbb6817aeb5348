"""Shipped test networks and seeded instance generators.

The canonical three-bus network reproduces the published ratings (generator
1 MW, battery 0.5 MW, load 0.47 MW / 0.22 MVAr, transformer 1.14 MVA).  Its
line impedances, generator reactive limits, battery energy capacity and
reactive deviation prices are fixture assumptions, not published data.
"""

from __future__ import annotations

from dataclasses import replace
from importlib import resources as _res

import numpy as np

from .der import DispatchPoint, Resource, Snapshot
from .network import Branch, Bus, Load, Network, Tap, load_network, load_snapshot


def _data(name: str) -> str:
    return _res.files("dernoe").joinpath("data", name).read_text(encoding="utf-8")


def canonical_network() -> Network:
    return load_network(_data("canonical_network.json"))


def canonical_snapshot() -> Snapshot:
    return load_snapshot(_data("canonical_snapshot.json"))


def canonical():
    net = canonical_network()
    return net, load_snapshot(_data("canonical_snapshot.json"), net)


def canonical_charged(soc: float = 0.25):
    """Canonical fixture with the battery half full.

    At this state of charge a 300 s / 10 min service window constrains
    neither resource, so delayed-service envelopes match the unconstrained
    economic ones.
    """
    net, snap = canonical()
    return net, replace(snap, soc={**snap.soc, "bess": soc})


def generator(rid, bus, p_max=1.0, q=0.6, committed=True) -> Resource:
    return Resource(rid, bus, "synchronous_generator", 0.0, p_max, -q, q,
                    ramp_up=0.033 * p_max, ramp_down=0.033 * p_max, t_act_plus=25.0, t_act_minus=25.0,
                    rho_p=380.0, rho_q=38.0, committed=committed)


def battery(rid, bus, p=0.5, e_max=None) -> Resource:
    return Resource(rid, bus, "inverter_storage", -p, p, -p, p, s_rating=p,
                    ramp_up=3.34 * p, ramp_down=3.34 * p, t_act_plus=0.5, t_act_minus=0.5,
                    e_min=0.0, e_max=p if e_max is None else e_max, rho_p=190.0, rho_q=19.0)


def pv(rid, bus, p=0.3) -> Resource:
    return Resource(rid, bus, "inverter_pv", 0.0, p, -0.44 * p, 0.44 * p, s_rating=1.1 * p,
                    ramp_up=p, ramp_down=p, t_act_plus=1.0, t_act_minus=1.0, rho_p=60.0, rho_q=6.0)


def five_bus():
    """Five buses behind an on-load tap changer, three resource kinds."""
    buses = (Bus("src", 33.0), Bus("h", 11.0), Bus("a", 11.0), Bus("b", 11.0), Bus("c", 11.0))
    branches = (
        Branch("src", "h", 0.02, 0.12, 4.0, Tap(0.95, 1.05)),
        Branch("h", "a", 0.12, 0.08, 2.5),
        Branch("a", "b", 0.15, 0.1, 1.6),
        Branch("h", "c", 0.2, 0.12, 1.5),
    )
    loads = (Load("a", 0.6, 0.25), Load("b", 0.4, 0.15), Load("c", 0.5, 0.2, exp_p=2.0, exp_q=2.0))
    res = (generator("g", "a", 1.2, 0.7), battery("s", "b", 0.8), pv("pv", "c", 0.9))
    net = Network("src", buses, branches, loads, res)
    snap = Snapshot(0.5, dispatch={"g": DispatchPoint(0.6, 0.1)}, soc={"s": 0.35})
    return net, snap


def _random_tree(rng, n: int) -> list[int]:
    """Parent index for buses 1..n-1 (bus 0 is the root); feeders are long and branchy."""
    parent = [-1]
    for j in range(1, n):
        lo = max(0, j - 6)
        parent.append(int(rng.integers(lo, j)))
    return parent


def synthetic_feeder(n_buses: int = 93, seed: int = 93, prefix: str = ""):
    """Seeded radial 11 kV feeder with a zone-substation transformer at its head.

    Bus 0 is the reference node (transformer primary).  Returns (net, snap).
    """
    rng = np.random.default_rng(seed)
    ids = [f"{prefix}n{i}" for i in range(n_buses)]
    parent = _random_tree(rng, n_buses - 1)
    buses = [Bus(ids[0], 33.0)] + [Bus(i, 11.0) for i in ids[1:]]
    branches = []
    branches.append(Branch(ids[0], ids[1], 0.01, 0.08, 6.5, Tap(0.95, 1.05)))
    for j in range(1, n_buses - 1):
        a, b = ids[parent[j] + 1], ids[j + 1]
        r = float(rng.uniform(0.002, 0.006))
        branches.append(Branch(a, b, r, r * float(rng.uniform(0.6, 1.0)), float(rng.uniform(4.0, 6.0))))
    loads = []
    for i in ids[2:]:
        p = float(rng.uniform(0.01, 0.04))
        loads.append(Load(i, p, p * float(rng.uniform(0.2, 0.5))))
    hosts = [ids[k] for k in rng.choice(np.arange(2, n_buses), size=14, replace=False)]
    res = [generator(f"{prefix}g{k}", hosts[k], 1.0, 0.6, committed=bool(k == 0)) for k in range(2)]
    res += [battery(f"{prefix}s{k}", hosts[2 + k], 0.5, 0.5) for k in range(6)]
    res += [pv(f"{prefix}pv{k}", hosts[8 + k], 0.3) for k in range(6)]
    net = Network(ids[0], tuple(buses), tuple(branches), tuple(loads), tuple(res))
    snap = Snapshot(0.5, dispatch={f"{prefix}g0": DispatchPoint(0.5, 0.0)},
                    soc={r.id: 0.3 * r.e_max for r in res if r.is_storage})
    return net, snap


def random_instance(seed: int, n_min: int = 3, n_max: int = 15):
    """Small random radial instance with mixed resources and a feasible dispatch."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    ids = [f"b{i}" for i in range(n)]
    parent = _random_tree(rng, n)
    buses = tuple(Bus(i, 11.0) for i in ids)
    branches = []
    for j in range(1, n):
        r = float(rng.uniform(0.005, 0.03))
        branches.append(Branch(ids[parent[j]], ids[j], r, r * float(rng.uniform(0.5, 2.0)),
                               float(rng.uniform(1.5, 4.0))))
    loads = tuple(Load(i, float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.0, 0.1)))
                  for i in ids[1:] if rng.random() < 0.7)
    res = []
    n_res = int(rng.integers(2, 5))
    for k in range(n_res):
        bus = ids[int(rng.integers(1, n))]
        kind = ("gen", "bess", "pv")[k % 3] if k < 3 else ("gen", "bess", "pv")[int(rng.integers(0, 3))]
        if kind == "gen":
            res.append(generator(f"r{k}", bus, float(rng.uniform(0.4, 1.2)), float(rng.uniform(0.2, 0.6)),
                                 committed=bool(rng.random() < 0.7)))
        elif kind == "bess":
            res.append(battery(f"r{k}", bus, float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 1.0))))
        else:
            res.append(pv(f"r{k}", bus, float(rng.uniform(0.1, 0.6))))
    dispatch, soc = {}, {}
    for r in res:
        if r.is_storage:
            soc[r.id] = float(rng.uniform(0.1, 0.9)) * r.e_max
        if r.committed and r.kind == "synchronous_generator":
            dispatch[r.id] = DispatchPoint(float(rng.uniform(0.2, 0.8)) * r.p_max, 0.0)
    net = Network(ids[0], buses, tuple(branches), loads, tuple(res))
    return net, Snapshot(0.5, dispatch=dispatch, soc=soc)


def replicated(n_feeders: int = 20, feeder_buses: int = 93, seed: int = 93):
    """Identical feeders behind one supply point.

    Returns (flat_net, flat_snap, feeders, upstream_net) where feeders is a
    list of (net, snap) rooted at each feeder head bus; the head buses are
    the attachment buses of the upstream network.
    """
    top = Bus("sys", 132.0)
    feeders, up_buses, up_branches = [], [top], []
    flat_buses, flat_branches, flat_loads, flat_res = [top], [], [], []
    dispatch, soc = {}, {}
    for f in range(n_feeders):
        net, snap = synthetic_feeder(feeder_buses, seed, prefix=f"f{f}_")
        feeders.append((net, snap))
        head = net.buses[0]
        up_buses.append(head)
        link = Branch("sys", head.id, 0.0005, 0.004, 12.0)
        up_branches.append(link)
        flat_buses += list(net.buses)
        flat_branches += [link] + list(net.branches)
        flat_loads += list(net.loads)
        flat_res += list(net.resources)
        dispatch.update(snap.dispatch)
        soc.update(snap.soc)
    flat = Network("sys", tuple(flat_buses), tuple(flat_branches), tuple(flat_loads), tuple(flat_res))
    upstream = Network("sys", tuple(up_buses), tuple(up_branches))
    return flat, Snapshot(0.5, dispatch=dispatch, soc=soc), feeders, upstream
