"""Radial distribution network model, JSON ingestion and validation."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .der import KINDS, DispatchPoint, Resource, ResourceError, Snapshot

DEFAULT_BASE_MVA = 10.0
DEFAULT_V_MIN = 0.95
DEFAULT_V_MAX = 1.05
DEFAULT_TAP = (0.9, 1.1)


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: str
    v_nom: float
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX


@dataclass(frozen=True)
class Tap:
    t_min: float = DEFAULT_TAP[0]
    t_max: float = DEFAULT_TAP[1]


@dataclass(frozen=True)
class Branch:
    """Series branch; `r`, `x` in per unit on the network base.

    A tap, when present, is an ideal transformer at the upstream end of the
    branch with continuous ratio in [t_min, t_max].
    """

    from_bus: str
    to_bus: str
    r: float
    x: float
    s_max: float
    tap: Tap | None = None


@dataclass(frozen=True)
class Load:
    bus: str
    p0: float
    q0: float
    exp_p: float = 0.0
    exp_q: float = 0.0
    curtail_max: float = 0.0


@dataclass(frozen=True)
class Network:
    root: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...] = ()
    resources: tuple[Resource, ...] = ()
    base: float = DEFAULT_BASE_MVA
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def bus(self, bus_id: str) -> Bus:
        return self.bus_map[bus_id]

    @property
    def bus_map(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    def resources_at(self, bus_id: str) -> list[Resource]:
        return [r for r in self.resources if r.bus == bus_id]

    def loads_at(self, bus_id: str) -> list[Load]:
        return [d for d in self.loads if d.bus == bus_id]

    def tree(self) -> "Tree":
        if self._index is None:
            object.__setattr__(self, "_index", _build_tree(self))
        return self._index


@dataclass(frozen=True)
class Tree:
    """Buses in breadth-first order from the root, with oriented parent branches."""

    order: tuple[str, ...]
    parent: dict[str, str]
    # bus id -> index into Network.branches of the branch feeding that bus
    parent_branch: dict[str, int]
    children: dict[str, tuple[str, ...]]


def _build_tree(net: Network) -> Tree:
    adj: dict[str, list[tuple[str, int]]] = {b.id: [] for b in net.buses}
    for k, br in enumerate(net.branches):
        adj[br.from_bus].append((br.to_bus, k))
        adj[br.to_bus].append((br.from_bus, k))
    order = [net.root]
    parent: dict[str, str] = {}
    parent_branch: dict[str, int] = {}
    seen = {net.root}
    queue = deque([net.root])
    while queue:
        u = queue.popleft()
        for v, k in sorted(adj[u]):
            if v in seen:
                continue
            seen.add(v)
            parent[v], parent_branch[v] = u, k
            order.append(v)
            queue.append(v)
    children = {b: tuple(v for v in order if parent.get(v) == b) for b in order}
    return Tree(tuple(order), parent, parent_branch, children)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    path: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.path}: {self.message}"


_num = {"type": "number"}
_str = {"type": "string"}

RESOURCE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["id", "bus", "kind", "p_min_mw", "p_max_mw", "q_min_mvar", "q_max_mvar",
                 "ramp_up_mw_s", "ramp_down_mw_s", "t_act_plus_s", "t_act_minus_s",
                 "rho_p_per_mwh", "rho_q_per_mvarh", "committed"],
    "properties": {
        "id": _str, "bus": _str, "kind": {"enum": list(KINDS)},
        "p_min_mw": _num, "p_max_mw": _num, "q_min_mvar": _num, "q_max_mvar": _num,
        "s_rating_mva": _num, "ramp_up_mw_s": _num, "ramp_down_mw_s": _num,
        "t_act_plus_s": _num, "t_act_minus_s": _num, "e_min_mwh": _num, "e_max_mwh": _num,
        "rho_p_per_mwh": _num, "rho_q_per_mvarh": _num, "committed": {"type": "boolean"},
    },
}

NETWORK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["root", "buses", "branches"],
    "properties": {
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "root": _str,
        "buses": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "v_nom_kv"],
            "properties": {"id": _str, "v_nom_kv": _num, "v_min_pu": _num, "v_max_pu": _num}}},
        "branches": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["from", "to", "r_pu", "x_pu", "s_max_mva"],
            "properties": {
                "from": _str, "to": _str, "r_pu": _num, "x_pu": _num, "s_max_mva": _num,
                "tap": {"type": "object", "additionalProperties": False,
                        "properties": {"t_min": _num, "t_max": _num}}}}},
        "loads": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["bus", "p_mw", "q_mvar"],
            "properties": {"bus": _str, "p_mw": _num, "q_mvar": _num, "exp_p": _num,
                           "exp_q": _num, "curtail_max": _num}}},
        "resources": {"type": "array", "items": RESOURCE_SCHEMA},
    },
}

SNAPSHOT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dt_h"],
    "properties": {
        "dt_h": {"type": "number", "exclusiveMinimum": 0},
        "dispatch": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "p_mw", "q_mvar"],
            "properties": {"id": _str, "p_mw": _num, "q_mvar": _num}}},
        "soc": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "e_mwh"],
            "properties": {"id": _str, "e_mwh": _num}}},
        "pv_available": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "p_mw"],
            "properties": {"id": _str, "p_mw": _num}}},
        "demand": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["bus", "p_mw", "q_mvar"],
            "properties": {"bus": _str, "p_mw": _num, "q_mvar": _num}}},
    },
}


def _json_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<document>"


def _check_schema(doc, schema, what):
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise NetworkError(f"{what} schema violation at {_json_path(e.absolute_path)}: {e.message}")


def _parse(document) -> Any:
    if isinstance(document, (str, bytes)):
        try:
            return json.loads(document)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"invalid JSON: {exc}") from None
    return document


def _resource_from_json(d: dict) -> Resource:
    return Resource(
        id=d["id"], bus=d["bus"], kind=d["kind"],
        p_min=d["p_min_mw"], p_max=d["p_max_mw"], q_min=d["q_min_mvar"], q_max=d["q_max_mvar"],
        s_rating=d.get("s_rating_mva"),
        ramp_up=d["ramp_up_mw_s"], ramp_down=d["ramp_down_mw_s"],
        t_act_plus=d["t_act_plus_s"], t_act_minus=d["t_act_minus_s"],
        e_min=d.get("e_min_mwh"), e_max=d.get("e_max_mwh"),
        rho_p=d["rho_p_per_mwh"], rho_q=d["rho_q_per_mvarh"], committed=d["committed"],
    )


def load_network(document) -> Network:
    """Build a validated :class:`Network` from JSON text or an already-parsed dict."""
    doc = _parse(document)
    _check_schema(doc, NETWORK_SCHEMA, "network")
    buses = tuple(Bus(b["id"], b["v_nom_kv"], b.get("v_min_pu", DEFAULT_V_MIN),
                      b.get("v_max_pu", DEFAULT_V_MAX)) for b in doc["buses"])
    branches = []
    for br in doc["branches"]:
        tap = None
        if "tap" in br:
            tap = Tap(br["tap"].get("t_min", DEFAULT_TAP[0]), br["tap"].get("t_max", DEFAULT_TAP[1]))
        branches.append(Branch(br["from"], br["to"], br["r_pu"], br["x_pu"], br["s_max_mva"], tap))
    loads = tuple(Load(d["bus"], d["p_mw"], d["q_mvar"], d.get("exp_p", 0.0), d.get("exp_q", 0.0),
                       d.get("curtail_max", 0.0)) for d in doc.get("loads", []))
    resources = tuple(_resource_from_json(r) for r in doc.get("resources", []))
    net = Network(doc["root"], buses, tuple(branches), loads, resources,
                  doc.get("base_mva", DEFAULT_BASE_MVA))
    errors = [d for d in validate(net) if d.severity == "error"]
    if errors:
        raise NetworkError("; ".join(str(d) for d in errors))
    return net


def read_network(path) -> Network:
    return load_network(Path(path).read_text(encoding="utf-8"))


def validate(net: Network) -> list[Diagnostic]:
    """All invariant violations as diagnostics; empty when the network is sound."""
    diags: list[Diagnostic] = []

    def err(path, msg):
        diags.append(Diagnostic("error", path, msg))

    ids = [b.id for b in net.buses]
    seen = set()
    for i, b in enumerate(net.buses):
        if b.id in seen:
            err(f"buses[{i}].id", f"duplicate bus id {b.id!r}")
        seen.add(b.id)
        if not (0 < b.v_min < b.v_max):
            err(f"buses[{i}]", f"voltage bounds must satisfy 0 < v_min < v_max, got {b.v_min}, {b.v_max}")
    known = set(ids)
    if net.root not in known:
        err("root", f"unknown bus {net.root!r}")
    if not net.base > 0:
        err("base_mva", "must be positive")
    for i, br in enumerate(net.branches):
        for end, bid in (("from", br.from_bus), ("to", br.to_bus)):
            if bid not in known:
                err(f"branches[{i}].{end}", f"unknown bus {bid!r}")
        if br.from_bus == br.to_bus:
            err(f"branches[{i}]", "self loop")
        if br.r < 0:
            err(f"branches[{i}].r_pu", "negative resistance")
        if not br.s_max > 0:
            err(f"branches[{i}].s_max_mva", f"thermal limit must be positive, got {br.s_max}")
        if br.tap is not None:
            if br.tap.t_min > br.tap.t_max:
                err(f"branches[{i}].tap", "t_min > t_max")
            elif not (0 < br.tap.t_min <= 1.0 <= br.tap.t_max):
                err(f"branches[{i}].tap", "ratio bounds must bracket 1")
    for i, d in enumerate(net.loads):
        if d.bus not in known:
            err(f"loads[{i}].bus", f"unknown bus {d.bus!r}")
        if not (math.isfinite(d.p0) and math.isfinite(d.q0)):
            err(f"loads[{i}]", "non-finite demand")
        if not 0.0 <= d.curtail_max <= 1.0:
            err(f"loads[{i}].curtail_max", "must lie in [0, 1]")
        for name in ("exp_p", "exp_q"):
            if getattr(d, name) not in (0.0, 2.0):
                diags.append(Diagnostic("warning", f"loads[{i}].{name}",
                                        "exponent other than 0 or 2 is linearized at 1 pu"))
    rids = set()
    for i, r in enumerate(net.resources):
        if r.id in rids:
            err(f"resources[{i}].id", f"duplicate resource id {r.id!r}")
        rids.add(r.id)
        if r.bus not in known:
            err(f"resources[{i}].bus", f"unknown bus {r.bus!r}")
        for msg in r.problems():
            err(f"resources[{i}]", msg)
    if any(d.severity == "error" for d in diags):
        return diags
    # radiality: n-1 branches and connected
    if len(net.branches) != len(net.buses) - 1:
        err("branches", f"non-radial topology: {len(net.branches)} branches for {len(net.buses)} buses")
    else:
        reached = set(_build_tree(net).order)
        if reached != known:
            err("branches", f"non-radial topology: buses {sorted(known - reached)} unreachable from root")
    return diags


def serialize(net: Network) -> dict:
    def res(r: Resource) -> dict:
        d = {"id": r.id, "bus": r.bus, "kind": r.kind, "p_min_mw": r.p_min, "p_max_mw": r.p_max,
             "q_min_mvar": r.q_min, "q_max_mvar": r.q_max}
        if r.s_rating is not None:
            d["s_rating_mva"] = r.s_rating
        d.update({"ramp_up_mw_s": r.ramp_up, "ramp_down_mw_s": r.ramp_down,
                  "t_act_plus_s": r.t_act_plus, "t_act_minus_s": r.t_act_minus})
        if r.e_min is not None:
            d["e_min_mwh"] = r.e_min
        if r.e_max is not None:
            d["e_max_mwh"] = r.e_max
        d.update({"rho_p_per_mwh": r.rho_p, "rho_q_per_mvarh": r.rho_q, "committed": r.committed})
        return d

    def branch(br: Branch) -> dict:
        d = {"from": br.from_bus, "to": br.to_bus, "r_pu": br.r, "x_pu": br.x, "s_max_mva": br.s_max}
        if br.tap is not None:
            d["tap"] = {"t_min": br.tap.t_min, "t_max": br.tap.t_max}
        return d

    return {
        "base_mva": net.base,
        "root": net.root,
        "buses": [{"id": b.id, "v_nom_kv": b.v_nom, "v_min_pu": b.v_min, "v_max_pu": b.v_max}
                  for b in net.buses],
        "branches": [branch(br) for br in net.branches],
        "loads": [{"bus": d.bus, "p_mw": d.p0, "q_mvar": d.q0, "exp_p": d.exp_p, "exp_q": d.exp_q,
                   "curtail_max": d.curtail_max} for d in net.loads],
        "resources": [res(r) for r in net.resources if r.kind in KINDS],
    }


def demand_at(load: Load, v: float, zeta: float = 0.0) -> tuple[float, float]:
    """Voltage-dependent demand (MW, MVAr) at voltage `v` pu with curtailment `zeta`."""
    if not v > 0:
        raise NetworkError("voltage must be positive")
    if not (0.0 <= zeta <= load.curtail_max + 1e-12):
        raise NetworkError(f"curtailment {zeta} outside [0, {load.curtail_max}]")
    k = 1.0 - zeta
    return k * load.p0 * v ** load.exp_p, k * load.q0 * v ** load.exp_q


def load_snapshot(document, net: Network | None = None) -> Snapshot:
    doc = _parse(document)
    _check_schema(doc, SNAPSHOT_SCHEMA, "snapshot")
    snap = Snapshot(
        dt=doc["dt_h"],
        dispatch={d["id"]: DispatchPoint(d["p_mw"], d["q_mvar"]) for d in doc.get("dispatch", [])},
        soc={d["id"]: d["e_mwh"] for d in doc.get("soc", [])},
        pv_available={d["id"]: d["p_mw"] for d in doc.get("pv_available", [])},
        demand={d["bus"]: (d["p_mw"], d["q_mvar"]) for d in doc.get("demand", [])},
    )
    if net is not None:
        problems = check_snapshot(net, snap)
        if problems:
            raise NetworkError("; ".join(problems))
    return snap


def read_snapshot(path, net: Network | None = None) -> Snapshot:
    return load_snapshot(Path(path).read_text(encoding="utf-8"), net)


def check_snapshot(net: Network, snap: Snapshot) -> list[str]:
    out = []
    rids = {r.id for r in net.resources}
    for key in list(snap.dispatch) + list(snap.soc) + list(snap.pv_available):
        if key not in rids:
            out.append(f"snapshot references unknown resource {key!r}")
    for bus in snap.demand:
        if bus not in net.bus_map:
            out.append(f"snapshot demand references unknown bus {bus!r}")
    for r in net.resources:
        if r.is_storage:
            e = snap.soc.get(r.id, r.e)
            if e is None:
                out.append(f"storage {r.id} has no state of charge")
            elif not (r.e_min - 1e-9 <= e <= r.e_max + 1e-9):
                out.append(f"storage {r.id} state of charge {e} outside [{r.e_min}, {r.e_max}]")
    return out


def serialize_snapshot(snap: Snapshot) -> dict:
    doc = {"dt_h": snap.dt,
           "dispatch": [{"id": k, "p_mw": v.p_lambda, "q_mvar": v.q_lambda} for k, v in snap.dispatch.items()],
           "soc": [{"id": k, "e_mwh": v} for k, v in snap.soc.items()]}
    if snap.pv_available:
        doc["pv_available"] = [{"id": k, "p_mw": v} for k, v in snap.pv_available.items()]
    if snap.demand:
        doc["demand"] = [{"bus": k, "p_mw": v[0], "q_mvar": v[1]} for k, v in snap.demand.items()]
    return doc


def effective_loads(net: Network, snap: Snapshot) -> list[Load]:
    """Loads with snapshot demand overrides applied (scaled per bus)."""
    if not snap.demand:
        return list(net.loads)
    out = []
    for bus in {d.bus for d in net.loads} | set(snap.demand):
        at = net.loads_at(bus)
        if bus not in snap.demand:
            out += at
            continue
        p, q = snap.demand[bus]
        if not at:
            out.append(Load(bus, p, q))
            continue
        p0 = sum(d.p0 for d in at)
        q0 = sum(d.q0 for d in at)
        for d in at:
            sp = d.p0 / p0 if p0 else 1.0 / len(at)
            sq = d.q0 / q0 if q0 else 1.0 / len(at)
            out.append(Load(bus, p * sp, q * sq, d.exp_p, d.exp_q, d.curtail_max))
    return sorted(out, key=lambda d: d.bus)


def resolved_resources(net: Network, snap: Snapshot) -> list[Resource]:
    try:
        return [snap.resolve(r) for r in net.resources]
    except ResourceError as exc:
        raise NetworkError(str(exc)) from None
