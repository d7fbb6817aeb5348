"""DER resource models: capability sets, ramp and energy windows, deviation cost.

Power sign convention for resources: positive ``p`` is generation (export
into the bus); a charging battery has negative ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .geometry import GeometryError, PqPolygon, box, convex_hull

KINDS = ("synchronous_generator", "inverter_storage", "inverter_pv")
# internal kind for upstream aggregation of a downstream envelope
AGGREGATE = "aggregate"


class ResourceError(ValueError):
    pass


@dataclass(frozen=True)
class Resource:
    id: str
    bus: str
    kind: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    s_rating: float | None = None
    ramp_up: float = math.inf
    ramp_down: float = math.inf
    t_act_plus: float = 0.0
    t_act_minus: float = 0.0
    e_min: float | None = None
    e_max: float | None = None
    e: float | None = None
    rho_p: float = 0.0
    rho_q: float = 0.0
    committed: bool = True
    polygon: PqPolygon | None = field(default=None, compare=False)

    @property
    def is_storage(self) -> bool:
        return self.kind == "inverter_storage"

    @property
    def is_inverter(self) -> bool:
        return self.kind in ("inverter_storage", "inverter_pv")

    def problems(self) -> list[str]:
        out = []
        if self.kind not in KINDS + (AGGREGATE,):
            out.append(f"unknown kind {self.kind!r}")
        if self.p_min > self.p_max:
            out.append("p_min > p_max")
        if self.q_min > self.q_max:
            out.append("q_min > q_max")
        if self.ramp_up < 0 or self.ramp_down < 0:
            out.append("negative ramp rate")
        if self.t_act_plus < 0 or self.t_act_minus < 0:
            out.append("negative activation delay")
        if self.rho_p < 0 or self.rho_q < 0:
            out.append("negative deviation price")
        if self.s_rating is not None and self.s_rating <= 0:
            out.append("s_rating must be positive")
        if self.is_storage:
            if self.e_min is None or self.e_max is None:
                out.append("storage requires e_min and e_max")
            elif self.e_min > self.e_max:
                out.append("e_min > e_max")
            elif self.e is not None and not (self.e_min - 1e-12 <= self.e <= self.e_max + 1e-12):
                out.append("state of charge outside [e_min, e_max]")
        return out


@dataclass(frozen=True)
class DispatchPoint:
    p_lambda: float = 0.0
    q_lambda: float = 0.0


@dataclass(frozen=True)
class Snapshot:
    """One operating interval: dispatch points, storage energy, interval length."""

    dt: float = 0.5
    dispatch: Mapping[str, DispatchPoint] = field(default_factory=dict)
    soc: Mapping[str, float] = field(default_factory=dict)
    pv_available: Mapping[str, float] = field(default_factory=dict)
    demand: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ResourceError(f"dt must be positive, got {self.dt}")

    def point(self, r: Resource) -> DispatchPoint:
        if not r.committed:
            return DispatchPoint(0.0, 0.0)
        return self.dispatch.get(r.id, DispatchPoint())

    def aggregate_dispatch(self, resources) -> tuple[float, float]:
        pts = [self.point(r) for r in resources]
        return sum(d.p_lambda for d in pts), sum(d.q_lambda for d in pts)

    def resolve(self, r: Resource) -> Resource:
        """Resource with snapshot data (state of charge, PV availability) applied."""
        changes = {}
        if r.id in self.soc:
            changes["e"] = self.soc[r.id]
        if r.kind == "inverter_pv" and r.id in self.pv_available:
            changes["p_max"] = min(r.p_max, self.pv_available[r.id])
        return replace(r, **changes) if changes else r


def power_limits(r: Resource) -> tuple[float, float]:
    """Active-power limits; an offline unit may also sit at zero."""
    if r.polygon is not None:
        return r.polygon.p_range()
    if not r.committed:
        return min(0.0, r.p_min), max(0.0, r.p_max)
    return r.p_min, r.p_max


def _disc_box(r: Resource, arc_segments: int) -> PqPolygon:
    s = r.s_rating
    corners = [(r.p_min, r.q_min), (r.p_max, r.q_min), (r.p_max, r.q_max), (r.p_min, r.q_max)]
    cand = [c for c in corners if c[0] ** 2 + c[1] ** 2 <= s * s * (1 + 1e-12)]

    def in_box(p, q):
        tol = 1e-12 * max(1.0, s)
        return r.p_min - tol <= p <= r.p_max + tol and r.q_min - tol <= q <= r.q_max + tol

    # circle/box-edge crossings bound the arcs that survive the box
    cuts = []
    for p in (r.p_min, r.p_max):
        if abs(p) <= s:
            h = math.sqrt(max(s * s - p * p, 0.0))
            cuts += [(p, h), (p, -h)]
    for q in (r.q_min, r.q_max):
        if abs(q) <= s:
            h = math.sqrt(max(s * s - q * q, 0.0))
            cuts += [(h, q), (-h, q)]
    cuts = [c for c in cuts if in_box(*c)]
    cand += cuts
    angles = sorted({math.atan2(q, p) % (2 * math.pi) for p, q in cuts})
    if not angles:
        # whole circle inside the box: four quarter arcs
        angles = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]
    bounds = angles + [angles[0] + 2 * math.pi]
    for a0, a1 in zip(bounds[:-1], bounds[1:]):
        mid = 0.5 * (a0 + a1)
        if a1 - a0 <= 1e-15 or not in_box(s * math.cos(mid), s * math.sin(mid)):
            continue
        for t in np.linspace(a0, a1, arc_segments + 1):
            cand.append((s * math.cos(t), s * math.sin(t)))
    if not cand:
        raise ResourceError(f"resource {r.id}: limit box lies outside the rating disc")
    return convex_hull(cand)


def capability_set(r: Resource, arc_segments: int = 16) -> PqPolygon:
    """P-Q capability polygon of a single resource (MW, MVAr).

    Generators use the rectangle of their active and reactive limits.
    Inverters are the limit box intersected with the apparent-power disc,
    each surviving arc replaced by an inscribed chain of `arc_segments`
    chords so the polygon never overstates the true capability.
    """
    if r.polygon is not None:
        return r.polygon
    problems = r.problems()
    if problems:
        raise ResourceError(f"resource {r.id}: " + "; ".join(problems))
    if r.is_inverter and r.s_rating is not None:
        if arc_segments < 8:
            raise ResourceError("arc_segments must be >= 8 for inverter resources")
        poly = _disc_box(r, arc_segments)
    else:
        poly = box(r.p_min, r.p_max, r.q_min, r.q_max)
    if not r.committed:
        poly = convex_hull(list(poly.vertices) + [(0.0, 0.0)])
    return poly


def _clip_to_limits(r: Resource, lo: float, hi: float, p_lambda: float) -> tuple[float, float]:
    p_lo, p_hi = power_limits(r)
    lo = max(lo, p_lo - p_lambda)
    hi = min(hi, p_hi - p_lambda)
    # zero deviation stays admissible even for an off-limit dispatch
    return min(lo, 0.0), max(hi, 0.0)


def deviation_bounds_ramp(r: Resource, tau: float, p_lambda: float = 0.0) -> tuple[float, float]:
    """Active-power deviation reachable within response time `tau` (s)."""
    if tau < 0:
        raise ResourceError("tau must be non-negative")

    def reach(rate, delay):
        if rate == 0.0 or tau <= delay:
            return 0.0
        return (tau - delay) * rate

    hi = max(0.0, reach(r.ramp_up, r.t_act_plus))
    lo = min(0.0, -reach(r.ramp_down, r.t_act_minus))
    return _clip_to_limits(r, lo, hi, p_lambda)


def deviation_bounds_energy(r: Resource, psi: float, dt: float, p_lambda: float = 0.0,
                            e: float | None = None) -> tuple[float, float]:
    """Deviation a storage unit can hold for `psi` hours after its energy commitment.

    Keeps ``e_min <= e - p_lambda*dt - dp*psi <= e_max``.
    """
    if not r.is_storage:
        raise ResourceError(f"resource {r.id} is not storage")
    if psi < 0:
        raise ResourceError("psi must be non-negative")
    e = r.e if e is None else e
    if e is None:
        raise ResourceError(f"storage {r.id} has no state of charge")
    if psi == 0.0:
        return _clip_to_limits(r, -math.inf, math.inf, p_lambda)
    left = e - p_lambda * dt
    hi = (left - r.e_min) / psi
    lo = (left - r.e_max) / psi
    return _clip_to_limits(r, lo, hi, p_lambda)


def deviation_cost(r: Resource, dp: float, dq: float) -> float:
    """Hourly cost ($/h) of deviating by (dp MW, dq MVAr)."""
    return r.rho_p * abs(dp) + r.rho_q * abs(dq)
