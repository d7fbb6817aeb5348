"""Nodal operating envelopes: boundary sweep, capability sums, stacks, aggregation.

Envelopes are reported at the reference node in import convention: positive
``p`` is power drawn from the upstream grid, so generation counts as
negative import.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from . import der, opf, powerflow
from .geometry import (
    HalfPlaneSet,
    PqPolygon,
    area,
    convex_hull,
    halfplane_description,
    is_subset,
    merge_close,
    minkowski_sum,
)
from .network import Network, effective_loads, resolved_resources

KINDS = ("capability", "feasibility", "ramp", "duration", "economic", "technical", "commercial")
# parameters each kind requires; the constraint rows of the subproblem follow from these
KIND_PARAMS = {
    "capability": (),
    "feasibility": (),
    "ramp": ("tau",),
    "duration": ("psi",),
    "economic": ("cost",),
    "technical": ("tau", "psi"),
    "commercial": ("tau", "psi", "cost"),
}
FRAMES = ("absolute_import", "deviation_from_dispatch")
DEFAULT_DENSITY = 5.0
MERGE_TOL = 1e-7


class EnvelopeError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvelopeRequest:
    """What to compute: kind, its parameters, and the reactive-power resolution.

    Give `K` directly or a density `N` (points per MVAr of reactive range);
    `frame` defaults to absolute import for capability and feasibility and
    to deviation from dispatch for the rest.
    """

    kind: str
    tau: float | None = None
    psi: float | None = None
    cost: float | None = None
    K: int | None = None
    density: float = DEFAULT_DENSITY
    frame: str | None = None
    arc_segments: int = 16
    # optional: add support solves until no edge is more than this far (MW) inside the set
    refine_tol: float | None = None
    refine_max: int = 400

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EnvelopeError(f"unknown envelope kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        need = KIND_PARAMS[self.kind]
        for name in ("tau", "psi", "cost"):
            v = getattr(self, name)
            if name in need and v is None:
                raise EnvelopeError(f"{self.kind} envelope requires {name}")
            if name not in need and v is not None:
                raise EnvelopeError(f"{self.kind} envelope does not take {name}")
            if v is not None and not (v >= 0):
                raise EnvelopeError(f"{name} must be non-negative, got {v}")
        if self.K is not None and self.K < 1:
            raise EnvelopeError("K must be >= 1")
        if not self.density > 0:
            raise EnvelopeError("density must be positive")
        if self.refine_tol is not None and not self.refine_tol > 0:
            raise EnvelopeError("refine_tol must be positive")
        if self.frame is None:
            default = "absolute_import" if self.kind in ("capability", "feasibility") else "deviation_from_dispatch"
            object.__setattr__(self, "frame", default)
        if self.frame not in FRAMES:
            raise EnvelopeError(f"unknown frame {self.frame!r}")

    @property
    def params(self) -> dict:
        out = {}
        if self.tau is not None:
            out["tau_s"] = self.tau
        if self.psi is not None:
            out["psi_h"] = self.psi
        if self.cost is not None:
            out["cost_per_h"] = self.cost
        return out

    def k_for(self, q_lo: float, q_hi: float) -> int:
        if self.K is not None:
            return self.K
        return max(1, math.ceil(self.density * (q_hi - q_lo) - 1e-9))

    def spec(self, objective: str, q_fix: float | None = None) -> opf.SubproblemSpec:
        return opf.SubproblemSpec(objective, self.tau, self.psi, self.cost, q_fix)


@dataclass
class Noe:
    kind: str
    params: dict
    reference_node: str
    boundary: PqPolygon
    frame: str
    meta: dict = field(default_factory=dict)

    @property
    def halfplanes(self) -> HalfPlaneSet:
        """Linear description A [p, q] <= b; equalities of degenerate envelopes become row pairs."""
        a_ub, b_ub, a_eq, b_eq = halfplane_description(self.boundary)
        rows = [(float(a[0]), float(a[1]), float(b)) for a, b in zip(a_ub, b_ub)]
        for a, b in zip(a_eq, b_eq):
            rows.append((float(a[0]), float(a[1]), float(b)))
            rows.append((float(-a[0]), float(-a[1]), float(-b)))
        return HalfPlaneSet(rows)

    @property
    def offset(self) -> tuple[float, float]:
        """Import at the dispatch point; deviation-frame envelopes are shifted by it."""
        d = self.meta.get("dispatch_import")
        return (0.0, 0.0) if d is None else (d[0], d[1])

    def in_frame(self, frame: str) -> "Noe":
        if frame == self.frame:
            return self
        if self.meta.get("dispatch_import") is None:
            raise EnvelopeError("envelope has no dispatch import to change frame")
        dp, dq = self.offset
        sign = -1.0 if frame == "deviation_from_dispatch" else 1.0
        return replace(self, boundary=self.boundary.translate(sign * dp, sign * dq), frame=frame)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "reference_node": self.reference_node,
            "frame": self.frame,
            "boundary": [[p, q] for p, q in self.boundary.vertices],
            "halfplanes": [list(r) for r in self.halfplanes.rows],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Noe":
        try:
            poly = PqPolygon([tuple(v) for v in doc["boundary"]])
            return cls(doc["kind"], dict(doc.get("params", {})), doc["reference_node"], poly,
                       doc["frame"], dict(doc.get("meta", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise EnvelopeError(f"malformed envelope document: {exc}") from None


@dataclass
class ContourStack:
    axis: str
    levels: list[tuple[float, Noe | None]]
    errors: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"axis": self.axis,
                "levels": [{"value": v, "noe": None if n is None else n.to_json()} for v, n in self.levels],
                "errors": {str(k): v for k, v in self.errors.items()}}


STACK_AXIS = {"ramp": "tau", "duration": "psi", "economic": "cost"}
# +1: envelopes grow with the parameter, -1: they shrink
STACK_TREND = {"ramp": 1, "duration": -1, "economic": 1}


def capability_noe(resources: list[der.Resource], arc_segments: int = 16, reference_node: str = "virtual") -> Noe:
    """Minkowski sum of the resources' capability sets, negated into import convention."""
    if not resources:
        raise EnvelopeError("capability envelope needs at least one resource")
    total = reduce(minkowski_sum, (der.capability_set(r, arc_segments) for r in resources))
    boundary = total.scale(-1.0)
    return Noe("capability", {}, reference_node, boundary, "absolute_import",
               {"resources": [r.id for r in resources]})


def dispatch_import(net: Network, snap: Snapshot, resources=None) -> tuple[float, float, bool]:
    """Exact power-flow import at the snapshot dispatch (taps at 1, no curtailment).

    Returns (p MW, q MVAr, network_feasible).
    """
    res = resources if resources is not None else resolved_resources(net, snap)
    topo = powerflow.SweepTopology.of(net)
    pos = {b: i for i, b in enumerate(topo.order)}
    pinj = np.zeros((1, len(topo.order)))
    qinj = np.zeros((1, len(topo.order)))
    for r in res:
        d = snap.point(r)
        pinj[0, pos[r.bus]] += d.p_lambda
        qinj[0, pos[r.bus]] += d.q_lambda
    net_eff = replace(net, loads=tuple(effective_loads(net, snap)))
    flow = powerflow.run(net_eff, pinj, qinj, topo=topo)
    if not flow.converged[0]:
        raise EnvelopeError("power flow at the dispatch point did not converge")
    return float(flow.p_import[0]), float(flow.q_import[0]), bool(flow.feasible(topo, 1e-7)[0])


def _solve_task(task):
    prog, opts = task
    sol = opf.solve(prog, opts)
    if not sol.ok:
        return sol.status, None, None, sol.ccp_iterations
    return sol.status, sol.s_import, opf.cone_tightness(sol), sol.ccp_iterations


def parallel_map(fn, tasks: list, jobs: int = 1) -> list:
    """Ordered map; results follow task order whatever the completion order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def boundary_sweep(net: Network, snap: Snapshot, req: EnvelopeRequest, *, resources=None,
                   opts: opf.SolverOptions | None = None, jobs: int = 1, timing: bool = False,
                   reference_node: str | None = None) -> Noe:
    """4 + 2K point sweep: four extreme solves, then min/max active import at K reactive levels."""
    if req.kind == "capability":
        raise EnvelopeError("capability envelopes are computed by capability_noe")
    t0 = time.perf_counter()
    opts = opts or opf.SolverOptions()
    res = resources if resources is not None else resolved_resources(net, snap)
    free = opf.build_subproblem(net, snap, req.spec("min_p_import"), res, req.arc_segments)
    first = parallel_map(_solve_task, [(free.variant(o), opts) for o in opf.OBJECTIVES], jobs)
    records = []
    for obj, (status, s, resid, ccp) in zip(opf.OBJECTIVES, first):
        records.append({"objective": obj, "q_fix": None, "status": status,
                        "point": None if s is None else [s[0], s[1]], "cone_residual": resid, "ccp": ccp})
    if all(r["status"] != "optimal" for r in records):
        raise EnvelopeError(f"empty envelope: all extreme solves failed ({records[0]['status']})")
    by_obj = {r["objective"]: r for r in records}
    warnings = []
    if by_obj["min_q_import"]["status"] != "optimal" or by_obj["max_q_import"]["status"] != "optimal":
        warnings.append("reactive extremes unavailable; sweep skipped")
        K = 0
        q_lo = q_hi = None
    else:
        q_lo = by_obj["min_q_import"]["point"][1]
        q_hi = by_obj["max_q_import"]["point"][1]
        K = req.k_for(q_lo, q_hi)
    if K:
        fixed = opf.build_subproblem(net, snap, req.spec("min_p_import", q_fix=q_lo), res, req.arc_segments)
        qs = [q_lo + k * (q_hi - q_lo) / K for k in range(1, K + 1)]
        tasks = []
        for q in qs:
            tasks.append((fixed.variant("min_p_import", q), opts))
            tasks.append((fixed.variant("max_p_import", q), opts))
        out = parallel_map(_solve_task, tasks, jobs)
        top = by_obj["max_q_import"]
        for i, (status, s, resid, ccp) in enumerate(out):
            q = qs[i // 2]
            rec = {"objective": ("min_p_import", "max_p_import")[i % 2], "q_fix": q, "status": status,
                   "point": None if s is None else [s[0], s[1]], "cone_residual": resid, "ccp": ccp}
            if status != "optimal" and i // 2 == K - 1:
                # the slice at the reactive maximum is (nearly) a single point, which makes
                # the fixed-q program degenerate; the max-q solve already lies on it
                rec.update(status="reused_extreme", point=list(top["point"]),
                           cone_residual=top["cone_residual"])
            records.append(rec)
    skipped = sum(r["status"] not in ("optimal", "reused_extreme") for r in records)
    reused = sum(r["status"] == "reused_extreme" for r in records)
    if reused:
        warnings.append(f"{reused} degenerate top-slice solves replaced by the max-q point")
    if skipped:
        warnings.append(f"{skipped} of {len(records)} boundary solves not optimal; skipped")

    dp, dq, feasible_dispatch = dispatch_import(net, snap, res)
    pts = [tuple(r["point"]) for r in records if r["point"] is not None]
    if feasible_dispatch:
        # the dispatch operating state is itself feasible, so it belongs to the envelope
        pts.append((dp, dq))
    else:
        warnings.append("dispatch point violates network limits")
    boundary = convex_hull(merge_close(pts, MERGE_TOL))
    if req.refine_tol is not None:
        boundary, extra = _refine(free, boundary, pts, req, opts, jobs)
        records += extra
    if req.frame == "deviation_from_dispatch":
        boundary = boundary.translate(-dp, -dq)
    resid = [r["cone_residual"] for r in records if r["cone_residual"] is not None]
    meta = {
        "k": K,
        "points_attempted": len(records),
        "statuses": [r["status"] for r in records],
        "points": records,
        "q_range": None if q_lo is None else [q_lo, q_hi],
        "max_cone_residual": max(resid) if resid else None,
        "dispatch_import": [dp, dq],
        "dispatch_feasible": feasible_dispatch,
        "warnings": warnings,
        "wall_time_s": round(time.perf_counter() - t0, 6) if timing else None,
    }
    return Noe(req.kind, req.params, reference_node or net.root, boundary, req.frame, meta)


def _refine(free: opf.ConvexProgram, boundary: PqPolygon, pts: list, req: EnvelopeRequest,
            opts: opf.SolverOptions, jobs: int):
    """Support solves along outward edge normals until every edge is within tolerance.

    Each accepted point is an exact operating point, so the hull stays an
    inner approximation; edges whose support value does not exceed their
    offset by more than `refine_tol` are settled.
    """
    settled: set = set()
    records = []
    pts = list(pts)
    while len(records) < req.refine_max:
        verts = boundary.vertices
        if len(verts) < 3:
            break
        todo = []
        for i, a in enumerate(verts):
            b = verts[(i + 1) % len(verts)]
            if (a, b) in settled:
                continue
            dp, dq = b[0] - a[0], b[1] - a[1]
            norm = math.hypot(dp, dq)
            if norm < MERGE_TOL:
                continue
            todo.append(((a, b), (dq / norm, -dp / norm)))
        todo = todo[: req.refine_max - len(records)]
        if not todo:
            break
        out = parallel_map(_solve_task, [(free.support(*n), opts) for _, n in todo], jobs)
        added = False
        for (edge, n), (status, s, resid, ccp) in zip(todo, out):
            records.append({"objective": "support", "direction": list(n), "q_fix": None, "status": status,
                            "point": None if s is None else [s[0], s[1]], "cone_residual": resid, "ccp": ccp})
            h = n[0] * edge[0][0] + n[1] * edge[0][1]
            if s is not None and n[0] * s[0] + n[1] * s[1] - h > req.refine_tol:
                pts.append((s[0], s[1]))
                added = True
            else:
                settled.add(edge)
        if not added:
            break
        boundary = convex_hull(merge_close(pts, MERGE_TOL))
    return boundary, records


def compute(net: Network, snap: Snapshot, req: EnvelopeRequest, **kw) -> Noe:
    if req.kind == "capability":
        res = resolved_resources(net, snap)
        noe = capability_noe(res, req.arc_segments, net.root)
        return noe
    return boundary_sweep(net, snap, req, **kw)


def absorb(outer: Noe, inners: list[Noe]) -> Noe:
    """Extend `outer` with the vertices of envelopes whose sets lie inside its set.

    Each computed vertex is an exact operating point satisfying a superset of
    the outer constraints, so it is also feasible for `outer`.  Adding it keeps
    the hull an inner approximation and makes the computed family nest the way
    the underlying sets do, which separate reactive grids alone do not ensure.
    """
    pts = list(outer.boundary.vertices)
    added = 0
    for inner in inners:
        if inner.meta.get("dispatch_import") != outer.meta.get("dispatch_import"):
            raise EnvelopeError("absorbed envelopes must share the dispatch point")
        verts = inner.in_frame(outer.frame).boundary.vertices
        pts += verts
        added += len(verts)
    if not added:
        return outer
    boundary = convex_hull(merge_close(pts, MERGE_TOL))
    meta = dict(outer.meta, absorbed_points=outer.meta.get("absorbed_points", 0) + added)
    return replace(outer, boundary=boundary, meta=meta)


# direct Venn relations, outer kind -> kinds whose sets it contains; processed in this order
FAMILY_ORDER = (
    ("technical", ("commercial",)),
    ("economic", ("commercial",)),
    ("ramp", ("technical",)),
    ("duration", ("technical",)),
    ("feasibility", ("technical", "ramp", "duration", "economic")),
)


def flexibility_family(net: Network, snap: Snapshot, tau: float, psi: float, cost: float,
                       K: int | None = None, density: float = DEFAULT_DENSITY, jobs: int = 1,
                       opts=None, nested: bool = True) -> dict[str, Noe]:
    """Feasibility, ramp, duration, economic, technical and commercial envelopes for one (tau, psi, c)."""
    params = {"feasibility": {}, "ramp": {"tau": tau}, "duration": {"psi": psi}, "economic": {"cost": cost},
              "technical": {"tau": tau, "psi": psi}, "commercial": {"tau": tau, "psi": psi, "cost": cost}}
    out = {}
    for kind, kw in params.items():
        req = EnvelopeRequest(kind, K=K, density=density, frame="absolute_import", **kw)
        out[kind] = boundary_sweep(net, snap, req, jobs=jobs, opts=opts)
    if nested:
        for outer, inners in FAMILY_ORDER:
            out[outer] = absorb(out[outer], [out[k] for k in inners])
    return out


def contour_stack(net: Network, snap: Snapshot, kind: str, levels, K: int | None = None,
                  density: float = DEFAULT_DENSITY, jobs: int = 1, opts=None, timing=False,
                  nested: bool = True) -> ContourStack:
    """One envelope per level; with `nested`, each level absorbs the vertices of the levels inside it."""
    if kind not in STACK_AXIS:
        raise EnvelopeError(f"stacks are defined for {', '.join(STACK_AXIS)}; got {kind!r}")
    levels = sorted(float(v) for v in levels)
    if not levels:
        raise EnvelopeError("contour stack needs at least one level")
    axis = STACK_AXIS[kind]
    out, errors = [], {}
    for v in levels:
        req = EnvelopeRequest(kind, K=K, density=density, **{axis: v})
        try:
            out.append((v, boundary_sweep(net, snap, req, jobs=jobs, opts=opts, timing=timing)))
        except EnvelopeError as exc:
            out.append((v, None))
            errors[v] = str(exc)
    if nested:
        order = range(len(out)) if STACK_TREND[kind] > 0 else range(len(out) - 1, -1, -1)
        prev = None
        for i in order:
            v, n = out[i]
            if n is None:
                continue
            if prev is not None:
                n = absorb(n, [prev])
                out[i] = (v, n)
            prev = n
    return ContourStack(axis, out, errors)


def stack_violations(stack: ContourStack, kind: str, eps: float = 1e-6) -> list[str]:
    """Pairs of consecutive levels that break the expected nesting."""
    bad = []
    trend = STACK_TREND[kind]
    noes = [(v, n) for v, n in stack.levels if n is not None]
    for (v1, a), (v2, b) in zip(noes, noes[1:]):
        inner, outer = (a, b) if trend > 0 else (b, a)
        if not is_subset(inner.boundary, outer.boundary, eps):
            bad.append(f"{stack.axis}={v1} vs {v2}")
    return bad


def aggregate_upstream(children: list[Noe], upstream_net: Network, snap: Snapshot, req: EnvelopeRequest,
                       attach: dict[int, str] | None = None, **kw) -> Noe:
    """Sweep the upstream network with each child envelope as a synthetic resource.

    A child attaches at ``attach[i]`` or, by default, at the bus named by its
    reference node.  Its absolute import polygon becomes an injection set
    (negated), and its dispatch import becomes the synthetic dispatch.
    """
    buses = upstream_net.bus_map
    synth = []
    dispatch = dict(snap.dispatch)
    for i, child in enumerate(children):
        bus = (attach or {}).get(i, child.reference_node)
        if bus not in buses:
            raise EnvelopeError(f"child {i}: attachment bus {bus!r} not in upstream network")
        absolute = child.in_frame("absolute_import") if child.frame != "absolute_import" else child
        poly = absolute.boundary.scale(-1.0)
        plo, phi = poly.p_range()
        qlo, qhi = poly.q_range()
        rid = f"noe:{i}:{bus}"
        synth.append(der.Resource(rid, bus, der.AGGREGATE, plo, phi, qlo, qhi, polygon=poly))
        if child.meta.get("dispatch_import") is not None:
            dpi, dqi = child.offset
            dispatch[rid] = der.DispatchPoint(-dpi, -dqi)
    own = resolved_resources(upstream_net, snap) if upstream_net.resources else []
    snap_up = replace(snap, dispatch=dispatch)
    noe = boundary_sweep(upstream_net, snap_up, req, resources=own + synth, **kw)
    noe.meta["children"] = len(children)
    return noe


@dataclass
class OracleResult:
    points: np.ndarray  # (n, 2) feasible import points, MW / MVAr
    hull: PqPolygon | None
    samples: int
    feasible: int
    diverged: int

    @property
    def empty(self) -> bool:
        return self.feasible == 0


def _sample_polygon(rng, poly: PqPolygon, n: int) -> np.ndarray:
    v = poly.array
    if len(v) == 1:
        return np.repeat(v, n, axis=0)
    if len(v) == 2:
        t = rng.random(n)[:, None]
        return v[0] + t * (v[1] - v[0])
    a_ub, b_ub, _, _ = halfplane_description(poly)
    lo, hi = v.min(axis=0), v.max(axis=0)
    out = np.empty((0, 2))
    frac = area(poly) / max(np.prod(hi - lo), 1e-300)
    while len(out) < n:
        m = int((n - len(out)) / max(frac, 1e-3) * 1.2) + 16
        cand = lo + rng.random((m, 2)) * (hi - lo)
        ok = np.all(cand @ a_ub.T <= b_ub + 1e-12, axis=1)
        out = np.vstack([out, cand[ok]])
    return out[:n]


def monte_carlo_oracle(net: Network, snap: Snapshot, samples: int, seed: int = 0, batch: int = 20000,
                       arc_segments: int = 16, windows: EnvelopeRequest | None = None,
                       vertex_share: float = 0.5) -> OracleResult:
    """Random resource set-points through the exact power flow; keep the feasible imports.

    Each resource is sampled uniformly over its capability polygon (bounding
    box with rejection); tap ratios uniformly over their range.  With
    `windows`, ramp and energy deviation limits of that request clip each
    resource's active power first.  With probability `vertex_share` a
    resource (or tap) sits on a vertex (or end) of its range instead; plain
    uniform sampling rarely reaches the corners of a multi-resource sum.
    """
    if samples < 1:
        raise EnvelopeError("samples must be >= 1")
    if not 0.0 <= vertex_share <= 1.0:
        raise EnvelopeError("vertex_share must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    res = resolved_resources(net, snap)
    topo = powerflow.SweepTopology.of(net)
    pos = {b: i for i, b in enumerate(topo.order)}
    polys = []
    for r in res:
        poly = der.capability_set(r, arc_segments)
        if windows is not None:
            poly = _clip_windows(r, poly, snap, windows)
        polys.append(poly)
    net_eff = replace(net, loads=tuple(effective_loads(net, snap)))
    pts, diverged, feasible = [], 0, 0
    done = 0
    n = len(topo.order)
    while done < samples:
        m = min(batch, samples - done)
        pinj = np.zeros((m, n))
        qinj = np.zeros((m, n))
        for r, poly in zip(res, polys):
            s = _sample_polygon(rng, poly, m)
            corner = rng.random(m) < vertex_share
            verts = poly.array
            s[corner] = verts[rng.integers(0, len(verts), int(corner.sum()))]
            pinj[:, pos[r.bus]] += s[:, 0]
            qinj[:, pos[r.bus]] += s[:, 1]
        taps = None
        if topo.tapped.any():
            lo, hi = topo.t_range[:, 0], topo.t_range[:, 1]
            u = rng.random((m, n))
            end = rng.random((m, n)) < vertex_share
            taps = lo + np.where(end, np.round(u), u) * (hi - lo)
        flow = powerflow.run(net_eff, pinj, qinj, taps, topo)
        ok = flow.feasible(topo)
        diverged += int((~flow.converged).sum())
        feasible += int(ok.sum())
        pts.append(np.stack([flow.p_import[ok], flow.q_import[ok]], axis=1))
        done += m
    cloud = np.vstack(pts) if pts else np.empty((0, 2))
    hull = convex_hull([tuple(p) for p in cloud]) if len(cloud) else None
    return OracleResult(cloud, hull, samples, feasible, diverged)


def _clip_windows(r: der.Resource, poly: PqPolygon, snap: Snapshot, req: EnvelopeRequest) -> PqPolygon:
    from .geometry import clip

    d = snap.point(r)
    lo, hi = -math.inf, math.inf
    if req.tau is not None:
        a, b = der.deviation_bounds_ramp(r, req.tau, d.p_lambda)
        lo, hi = max(lo, a), min(hi, b)
    if req.psi is not None and r.is_storage:
        a, b = der.deviation_bounds_energy(r, req.psi, snap.dt, d.p_lambda)
        lo, hi = max(lo, a), min(hi, b)
    out = poly
    if math.isfinite(hi):
        out = clip(out, 1.0, 0.0, d.p_lambda + hi)
    if out is not None and math.isfinite(lo):
        out = clip(out, -1.0, 0.0, -(d.p_lambda + lo))
    if out is None:
        raise EnvelopeError(f"resource {r.id}: deviation window excludes its capability set")
    return out


def nesting_violations(noes: dict[str, Noe], eps: float = 1e-6) -> list[str]:
    """Check the flexibility Venn relations among whichever kinds are present (deviation frame)."""
    rel = [("commercial", "technical"), ("technical", "feasibility"), ("technical", "ramp"),
           ("technical", "duration"), ("commercial", "economic")]
    dev = {k: n.in_frame("deviation_from_dispatch") for k, n in noes.items()}
    bad = []
    for inner, outer in rel:
        if inner in dev and outer in dev and not is_subset(dev[inner].boundary, dev[outer].boundary, eps):
            bad.append(f"{inner} not within {outer}")
    return bad
