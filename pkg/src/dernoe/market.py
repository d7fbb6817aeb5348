"""Service envelopes and bid stacks.

Directions follow the import convention at the reference node: a raise
service lowers the import (negative active deviation), a lower service
increases it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources as _res

from . import envelopes as env
from .geometry import PqPolygon, intersect
from .network import Network

DIRECTIONS = ("raise", "lower", "both")
VOLUME_EPS = 1e-9


class MarketError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    tau: float  # required response time, s
    psi: float  # required call length, h
    direction: str = "both"
    symmetric: bool = False

    def __post_init__(self):
        if not (self.tau > 0 and self.psi > 0):
            raise MarketError(f"service {self.name}: tau and psi must be positive")
        if self.direction not in DIRECTIONS:
            raise MarketError(f"service {self.name}: unknown direction {self.direction!r}")
        if self.symmetric and self.direction != "both":
            raise MarketError(f"service {self.name}: symmetric services must have direction 'both'")


def catalog() -> dict[str, ServiceSpec]:
    doc = json.loads(_res.files("dernoe").joinpath("data", "services.json").read_text(encoding="utf-8"))
    return {s["name"]: ServiceSpec(s["name"], s["tau_s"], s["psi_h"], s["direction"], s["symmetric"])
            for s in doc["services"]}


def service(name: str) -> ServiceSpec:
    cat = catalog()
    if name not in cat:
        raise MarketError(f"unknown service {name!r}; catalog: {', '.join(sorted(cat))}")
    return cat[name]


def symmetric_part(poly: PqPolygon) -> PqPolygon | None:
    """Intersection with the mirror image in active power (deviation frame)."""
    mirror = PqPolygon([(-p, q) for p, q in poly.vertices])
    return intersect(poly, mirror)


def _finish(noe: env.Noe, svc: ServiceSpec) -> env.Noe:
    noe.meta["service"] = svc.name
    if not svc.symmetric:
        return noe
    dev = noe.in_frame("deviation_from_dispatch")
    sym = symmetric_part(dev.boundary)
    if sym is None:
        # zero deviation is always admissible, so this only follows numerical trouble
        sym = PqPolygon([(0.0, 0.0)])
    out = replace(dev, boundary=sym, meta=dict(noe.meta, symmetric=True))
    return out.in_frame(noe.frame)


def technical_noe(net: Network, snap, svc: ServiceSpec, K: int | None = None, **kw) -> env.Noe:
    req = env.EnvelopeRequest("technical", tau=svc.tau, psi=svc.psi, K=K, **_req_kw(kw))
    return _finish(env.boundary_sweep(net, snap, req, **kw), svc)


def commercial_noe(net: Network, snap, svc: ServiceSpec, c: float, K: int | None = None, **kw) -> env.Noe:
    if c < 0:
        raise MarketError("cost level must be non-negative")
    req = env.EnvelopeRequest("commercial", tau=svc.tau, psi=svc.psi, cost=c, K=K, **_req_kw(kw))
    return _finish(env.boundary_sweep(net, snap, req, **kw), svc)


def _req_kw(kw: dict) -> dict:
    out = {}
    for name in ("density", "arc_segments"):
        if name in kw:
            out[name] = kw.pop(name)
    return out


def service_range(noe: env.Noe, svc: ServiceSpec) -> float:
    """Active-power volume (MW) the envelope offers in the service direction."""
    lo, hi = noe.in_frame("deviation_from_dispatch").boundary.p_range()
    up, down = max(0.0, -lo), max(0.0, hi)
    if svc.direction == "raise":
        return up
    if svc.direction == "lower":
        return down
    return min(up, down)


@dataclass
class BidStack:
    service: ServiceSpec
    tranches: list[tuple[float, float]]  # (volume MW, price $/MWh)
    warnings: list[str]

    @property
    def total_volume(self) -> float:
        return sum(v for v, _ in self.tranches)

    def to_json(self) -> dict:
        return {"service": self.service.name,
                "tranches": [{"volume_mw": v, "price_per_mwh": p} for v, p in self.tranches],
                "warnings": list(self.warnings)}


def bid_stack(net: Network, snap, svc: ServiceSpec, cost_levels, K: int | None = None, **kw) -> BidStack:
    """Price-volume tranches from commercial envelopes at increasing cost caps.

    Tranche i has volume R_i - R_{i-1} and price c_i / R_i, where R_i is the
    service-direction range of the envelope at cost c_i.
    """
    levels = [float(c) for c in cost_levels]
    if not levels:
        raise MarketError("at least one cost level is required")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise MarketError("cost levels must be strictly increasing")
    tranches, warnings = [], []
    prev = 0.0
    for c in levels:
        noe = commercial_noe(net, snap, svc, c, K, **dict(kw))
        # envelopes are nested in c, so a smaller range only reflects solver noise
        r = max(service_range(noe, svc), prev)
        vol = r - prev
        if vol > VOLUME_EPS:
            tranches.append((vol, c / r))
            prev = r
    if not tranches:
        warnings.append("all commercial envelopes are degenerate in the service direction")
    return BidStack(svc, tranches, warnings)
