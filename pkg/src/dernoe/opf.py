"""Convex boundary-point subproblem over the branch-flow model.

All program quantities are per unit on the network base; results are
reported in MW / MVAr.  Each branch carries the second-order cone
relaxation ``||(2P, 2Q, w - l)|| <= w + l`` of ``l*w = P^2 + Q^2``.  When the
relaxation is slack at the optimum (fictitious losses, typical of
maximum-import objectives) a penalty convex-concave pass restores
``l*w = P^2 + Q^2`` by linearizing the reverse cone around the last iterate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import clarabel
import numpy as np
import scipy.sparse as sp

from . import der
from .geometry import halfplane_description
from .network import Network, NetworkError, effective_loads, resolved_resources, validate

OBJECTIVES = ("min_p_import", "max_p_import", "min_q_import", "max_q_import")


class OpfError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-9
    gap_tol: float = 1e-9
    max_iter: int = 200
    # relaxation gap (pu) above which the tightening pass runs
    exact_tol: float = 1e-7
    # the penalty starts small so early passes can move along the cone
    # surface, then doubles until the slack vanishes
    ccp_max_iter: int = 60
    ccp_penalty: float = 1e-2
    ccp_growth: float = 2.0
    ccp_penalty_max: float = 1e6
    # objective change (pu) between passes that ends tightening
    ccp_obj_tol: float = 1e-8
    # extra starting penalties; the homotopy path picks the local optimum, so
    # each start is tightened from the same relaxed point and the best is kept
    ccp_restarts: tuple[float, ...] = ()
    tighten: bool = True


@dataclass(frozen=True)
class SubproblemSpec:
    """One boundary solve: objective, optional constraint rows, optional q binding.

    `tau` (s), `psi` (h) and `cost` ($/h) switch on the ramp, energy and cost
    rows respectively; `q_fix` (MVAr) binds the reactive import.
    """

    objective: str
    tau: float | None = None
    psi: float | None = None
    cost: float | None = None
    q_fix: float | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise OpfError(f"unknown objective {self.objective!r}")
        if self.q_fix is not None and not self.objective.endswith("p_import"):
            raise OpfError("q_fix is only valid with active-power objectives")
        for name in ("tau", "psi", "cost"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise OpfError(f"{name} must be non-negative, got {v}")

    @property
    def constraint_set(self) -> frozenset:
        out = {"deviation"}
        if self.tau is not None:
            out.add("ramp")
        if self.psi is not None:
            out.add("energy")
        if self.cost is not None:
            out.add("cost")
        return frozenset(out)


class _Rows:
    """Accumulates rows of ``A x + s = b`` for one cone family."""

    def __init__(self):
        self.i, self.j, self.v, self.b = [], [], [], []

    def add(self, coeffs: dict[int, float], rhs: float) -> int:
        r = len(self.b)
        for j, v in coeffs.items():
            if v != 0.0:
                self.i.append(r)
                self.j.append(j)
                self.v.append(float(v))
        self.b.append(float(rhs))
        return r

    def __len__(self):
        return len(self.b)


@dataclass
class ConvexProgram:
    """Standard form: minimize c.x subject to A x + s = b, s in the cone product."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[tuple[str, int]]
    names: list[str]
    spec: SubproblemSpec
    # bookkeeping for extraction and the tightening pass
    index: dict = field(repr=False)
    base: float = 1.0
    sense: float = 1.0
    # (a_p, a_q) when the objective is the support value a_p * p + a_q * q (maximized)
    direction: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return len(self.c)

    def to_json(self) -> dict:
        A = self.A.tocoo()
        return {
            "c": self.c.tolist(),
            "A": {"rows": A.shape[0], "cols": A.shape[1], "i": A.row.tolist(), "j": A.col.tolist(),
                  "v": A.data.tolist()},
            "b": self.b.tolist(),
            "cones": [{"type": t, "dims": d} for t, d in self.cones],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def variant(self, objective: str, q_fix: float | None = None) -> "ConvexProgram":
        """Same constraint matrix with another objective or binding value.

        Only valid when `q_fix` presence matches the program's own spec.
        """
        if (q_fix is None) != (self.spec.q_fix is None):
            raise OpfError("variant must keep the q binding structure")
        spec = replace(self.spec, objective=objective, q_fix=q_fix)
        idx = self.index
        c = np.zeros(self.n)
        target = idx["p_import"] if "p_import" in objective else idx["q_import"]
        sense = 1.0 if objective.startswith("min") else -1.0
        c[target] = sense
        b = self.b
        if q_fix is not None:
            b = b.copy()
            b[idx["q_fix_row"]] = q_fix / self.base
        return ConvexProgram(c, self.A, b, self.cones, self.names, spec, idx, self.base, sense)

    def support(self, a_p: float, a_q: float) -> "ConvexProgram":
        """Maximize a_p * p_import + a_q * q_import over the same constraints."""
        if self.spec.q_fix is not None:
            raise OpfError("support solves take no q binding")
        idx = self.index
        c = np.zeros(self.n)
        c[idx["p_import"]] = -a_p
        c[idx["q_import"]] = -a_q
        return ConvexProgram(c, self.A, self.b, self.cones, self.names, self.spec, idx, self.base, -1.0,
                             (float(a_p), float(a_q)))


@dataclass
class Solution:
    status: str  # optimal | infeasible | numeric_failure
    s_import: tuple[float, float]
    objective: float
    resources: dict[str, tuple[float, float, float, float]]
    w: dict[str, float]
    flows: dict[str, tuple[float, float, float]]  # bus -> (P MW, Q MVAr, l pu) on its parent branch
    cone_gap: dict[str, float]  # relative cone residual per branch
    iterations: int = 0
    ccp_iterations: int = 0
    solver_status: str = ""
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _load_factor(e: float):
    """Affine model of v**e in w = v**2: exact for 0 and 2, linearized at 1 pu otherwise."""
    if e == 0.0:
        return 1.0, 0.0
    if e == 2.0:
        return 0.0, 1.0
    return 1.0 - e / 2, e / 2


def build_subproblem(net: Network, snap: der.Snapshot, spec: SubproblemSpec,
                     resources: list[der.Resource] | None = None, arc_segments: int = 16) -> ConvexProgram:
    """Assemble the conic program for one boundary solve.

    `resources` overrides the network's resources (already resolved against
    the snapshot); used for synthetic aggregate resources.
    """
    errors = [d for d in validate(net) if d.severity == "error"]
    if errors:
        raise NetworkError("; ".join(str(d) for d in errors))
    tree = net.tree()
    base = net.base
    res = list(resources) if resources is not None else resolved_resources(net, snap)
    loads = effective_loads(net, snap)
    names: list[str] = []

    def var(name):
        names.append(name)
        return len(names) - 1

    idx: dict = {"w": {}, "P": {}, "Q": {}, "l": {}, "wt": {}, "p": {}, "q": {}, "zeta": {}}
    for b in tree.order:
        idx["w"][b] = var(f"w[{b}]")
    for b in tree.order[1:]:
        idx["P"][b] = var(f"P[{b}]")
        idx["Q"][b] = var(f"Q[{b}]")
        idx["l"][b] = var(f"l[{b}]")
        if net.branches[tree.parent_branch[b]].tap is not None:
            idx["wt"][b] = var(f"wt[{b}]")
    for r in res:
        idx["p"][r.id] = var(f"p[{r.id}]")
        idx["q"][r.id] = var(f"q[{r.id}]")
    for k, d in enumerate(loads):
        if d.curtail_max > 0:
            idx["zeta"][k] = var(f"zeta[{k}]")
    p_imp = var("p_import")
    q_imp = var("q_import")
    idx["p_import"], idx["q_import"] = p_imp, q_imp
    split = {}
    if spec.cost is not None:
        for r in res:
            if r.kind == der.AGGREGATE:
                continue
            split[r.id] = tuple(var(f"{s}[{r.id}]") for s in ("dp+", "dp-", "dq+", "dq-"))

    eq, ineq = _Rows(), _Rows()
    socs: list[_Rows] = []
    bm = net.bus_map

    def soc(rows: list[tuple[dict, float]]):
        block = _Rows()
        for coeffs, rhs in rows:
            block.add(coeffs, rhs)
        socs.append(block)

    # reference voltage
    eq.add({idx["w"][tree.order[0]]: 1.0}, 1.0)

    # power balance per bus: inflow on parent branch (or import) minus losses equals
    # demand minus injections plus outflow to children
    by_bus_res: dict[str, list[der.Resource]] = {}
    for r in res:
        by_bus_res.setdefault(r.bus, []).append(r)
    by_bus_load: dict[str, list[int]] = {}
    for k, d in enumerate(loads):
        by_bus_load.setdefault(d.bus, []).append(k)
    for b in tree.order:
        for kind, flow in (("p", "P"), ("q", "Q")):
            coeffs: dict[int, float] = {}
            rhs = 0.0
            if b == tree.order[0]:
                coeffs[p_imp if kind == "p" else q_imp] = 1.0
            else:
                br = net.branches[tree.parent_branch[b]]
                coeffs[idx[flow][b]] = 1.0
                coeffs[idx["l"][b]] = -(br.r if kind == "p" else br.x)
            for c in tree.children[b]:
                coeffs[idx[flow][c]] = coeffs.get(idx[flow][c], 0.0) - 1.0
            for r in by_bus_res.get(b, []):
                coeffs[idx[kind][r.id]] = coeffs.get(idx[kind][r.id], 0.0) + 1.0
            for k in by_bus_load.get(b, []):
                d = loads[k]
                base_val = (d.p0 if kind == "p" else d.q0) / base
                a0, a1 = _load_factor(d.exp_p if kind == "p" else d.exp_q)
                rhs += base_val * a0
                if a1:
                    coeffs[idx["w"][b]] = coeffs.get(idx["w"][b], 0.0) - base_val * a1
                if k in idx["zeta"]:
                    # curtailment removes a fraction of nominal demand
                    coeffs[idx["zeta"][k]] = coeffs.get(idx["zeta"][k], 0.0) + base_val
            eq.add(coeffs, rhs)

    for k, zi in idx["zeta"].items():
        ineq.add({zi: -1.0}, 0.0)
        ineq.add({zi: 1.0}, loads[k].curtail_max)

    # voltage drop, taps, cones, voltage and thermal limits
    for b in tree.order:
        bus = bm[b]
        wi = idx["w"][b]
        ineq.add({wi: -1.0}, -bus.v_min ** 2)
        ineq.add({wi: 1.0}, bus.v_max ** 2)
    for b in tree.order[1:]:
        br = net.branches[tree.parent_branch[b]]
        a = tree.parent[b]
        P, Q, L = idx["P"][b], idx["Q"][b], idx["l"][b]
        if b in idx["wt"]:
            src = idx["wt"][b]
            ineq.add({idx["w"][a]: br.tap.t_min ** 2, src: -1.0}, 0.0)
            ineq.add({src: 1.0, idx["w"][a]: -br.tap.t_max ** 2}, 0.0)
        else:
            src = idx["w"][a]
        z2 = br.r ** 2 + br.x ** 2
        eq.add({idx["w"][b]: 1.0, src: -1.0, P: 2 * br.r, Q: 2 * br.x, L: -z2}, 0.0)
        ineq.add({L: -1.0}, 0.0)
        # s = b - A x must lie in the cone: (src + l, 2P, 2Q, src - l)
        soc([({src: -1.0, L: -1.0}, 0.0), ({P: -2.0}, 0.0), ({Q: -2.0}, 0.0), ({src: -1.0, L: 1.0}, 0.0)])
        if math.isfinite(br.s_max):
            smax = br.s_max / base
            soc([({}, smax), ({P: -1.0}, 0.0), ({Q: -1.0}, 0.0)])
            soc([({}, smax), ({P: -1.0, L: br.r}, 0.0), ({Q: -1.0, L: br.x}, 0.0)])

    # resources: capability, deviation windows, cost
    for r in res:
        pi, qi = idx["p"][r.id], idx["q"][r.id]
        poly = der.capability_set(r, arc_segments).scale(1.0 / base)
        a_ub, b_ub, a_eq, b_eq = halfplane_description(poly)
        for (ap, aq), bb in zip(a_ub, b_ub):
            ineq.add({pi: ap, qi: aq}, bb)
        for (ap, aq), bb in zip(a_eq, b_eq):
            eq.add({pi: ap, qi: aq}, bb)
        if r.kind == der.AGGREGATE:
            continue
        d0 = snap.point(r)
        pl, ql = d0.p_lambda / base, d0.q_lambda / base
        windows = []
        if spec.tau is not None:
            windows.append(der.deviation_bounds_ramp(r, spec.tau, d0.p_lambda))
        if spec.psi is not None and r.is_storage:
            windows.append(der.deviation_bounds_energy(r, spec.psi, snap.dt, d0.p_lambda))
        for lo, hi in windows:
            if math.isfinite(hi):
                ineq.add({pi: 1.0}, pl + hi / base)
            if math.isfinite(lo):
                ineq.add({pi: -1.0}, -(pl + lo / base))
        if r.id in split:
            dpp, dpm, dqp, dqm = split[r.id]
            eq.add({pi: 1.0, dpp: -1.0, dpm: 1.0}, pl)
            eq.add({qi: 1.0, dqp: -1.0, dqm: 1.0}, ql)
            for v in (dpp, dpm, dqp, dqm):
                ineq.add({v: -1.0}, 0.0)
    if split:
        coeffs = {}
        for r in res:
            if r.id in split:
                dpp, dpm, dqp, dqm = split[r.id]
                coeffs.update({dpp: r.rho_p * base, dpm: r.rho_p * base, dqp: r.rho_q * base, dqm: r.rho_q * base})
        ineq.add(coeffs, spec.cost)

    if spec.q_fix is not None:
        idx["q_fix_row"] = eq.add({q_imp: 1.0}, spec.q_fix / base)

    n = len(names)
    c = np.zeros(n)
    target = p_imp if "p_import" in spec.objective else q_imp
    sense = 1.0 if spec.objective.startswith("min") else -1.0
    c[target] = sense

    blocks = [eq, ineq] + socs
    rows, cols, vals, rhs = [], [], [], []
    off = 0
    for blk in blocks:
        rows += [i + off for i in blk.i]
        cols += blk.j
        vals += blk.v
        rhs += blk.b
        off += len(blk)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(off, n))
    A.sum_duplicates()
    cones = [("zero", len(eq)), ("nonneg", len(ineq))] + [("soc", len(s)) for s in socs]
    idx["n_eq"], idx["n_ineq"] = len(eq), len(ineq)
    idx["resources"] = res
    idx["order"] = tree.order
    idx["parent"] = tree.parent
    return ConvexProgram(c, A, np.asarray(rhs), cones, names, spec, idx, base, sense)


def _clarabel_cones(cones):
    out = []
    for t, d in cones:
        if d == 0:
            continue
        if t == "zero":
            out.append(clarabel.ZeroConeT(d))
        elif t == "nonneg":
            out.append(clarabel.NonnegativeConeT(d))
        else:
            out.append(clarabel.SecondOrderConeT(d))
    return out


_OPTIMAL = {"Solved"}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}


def _run(c, A, b, cones, opts: SolverOptions):
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = opts.feas_tol
    settings.tol_gap_abs = opts.gap_tol
    settings.tol_gap_rel = opts.gap_tol
    settings.max_iter = opts.max_iter
    n = len(c)
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, c, A, b, _clarabel_cones(cones), settings)
    out = solver.solve()
    status = str(out.status).split(".")[-1]
    return status, np.array(out.x), int(out.iterations)


def _gaps(prog: ConvexProgram, x: np.ndarray) -> dict[str, tuple[float, np.ndarray]]:
    """Relaxation slack (w + l) - ||(2P, 2Q, w - l)|| per branch, with its gradient direction."""
    idx = prog.index
    out = {}
    for b in idx["order"][1:]:
        src = idx["wt"].get(b, idx["w"][idx["parent"][b]])
        P, Q, L = idx["P"][b], idx["Q"][b], idx["l"][b]
        z = np.array([2 * x[P], 2 * x[Q], x[src] - x[L]])
        out[b] = (x[src] + x[L] - float(np.linalg.norm(z)), z, x[src] + x[L])
    return out


def _status_of(s: str) -> str:
    if s in _OPTIMAL:
        return "optimal"
    if s in _INFEASIBLE:
        return "infeasible"
    return "numeric_failure"


def solve(prog: ConvexProgram, opts: SolverOptions | None = None) -> Solution:
    """Solve the relaxed program; tighten with the penalty pass when the cones are slack."""
    opts = opts or SolverOptions()
    status, x, iters = _run(prog.c, prog.A, prog.b, prog.cones, opts)
    if status == "AlmostSolved":
        status = "Solved"
    st = _status_of(status)
    if st != "optimal":
        return _empty(st, status, iters)
    ccp = 0
    gaps = _gaps(prog, x)
    if opts.tighten and max((g[0] for g in gaps.values()), default=0.0) > opts.exact_tol:
        relaxed = x
        best = None
        for mu0 in (opts.ccp_penalty, *opts.ccp_restarts):
            xt, k, iters2, ok = _tighten(prog, relaxed, replace(opts, ccp_penalty=mu0))
            iters += iters2
            ccp += k
            if ok and (best is None or prog.c @ xt < prog.c @ best):
                best = xt
        if best is None:
            return _empty("numeric_failure", "TighteningFailed", iters, ccp)
        x = best
    return _extract(prog, x, status, iters, ccp)


def _tighten(prog: ConvexProgram, x: np.ndarray, opts: SolverOptions):
    """Penalty convex-concave iterations enforcing ||z|| >= w + l via its tangent cut."""
    idx = prog.index
    order = list(idx["order"][1:])
    nb = len(order)
    n = prog.n
    mu = opts.ccp_penalty
    total_iters = 0
    prev_obj = None
    good = None  # last iterate that satisfies the exact flow equations
    n_eq, n_in = idx["n_eq"], idx["n_ineq"]
    A0 = sp.hstack([prog.A, sp.csc_matrix((prog.A.shape[0], nb))]).tocsr()
    sig_nonneg = sp.hstack([sp.csc_matrix((nb, n)), -sp.identity(nb, format="csc")])
    b = np.concatenate([prog.b[:n_eq + n_in], np.zeros(2 * nb), prog.b[n_eq + n_in:]])
    cones = [("zero", n_eq), ("nonneg", n_in + 2 * nb)] + list(prog.cones[2:])
    for k in range(1, opts.ccp_max_iter + 1):
        rows, cols, vals = [], [], []
        for m, b_id in enumerate(order):
            src = idx["wt"].get(b_id, idx["w"][idx["parent"][b_id]])
            P, Q, L = idx["P"][b_id], idx["Q"][b_id], idx["l"][b_id]
            # linearize at the physical current for the present flows; the relaxed
            # l can exceed w, and a tangent taken there points into the wrong nappe
            wv = max(float(x[src]), 1e-6)
            ell = (x[P] ** 2 + x[Q] ** 2) / wv
            z = np.array([2 * x[P], 2 * x[Q], wv - ell])
            nz = float(np.linalg.norm(z))
            zh = z / nz if nz > 1e-12 else np.array([0.0, 0.0, 1.0])
            # (w + l) - zh.(2P, 2Q, w - l) - sigma <= 0
            for j, v in ((src, 1.0 - zh[2]), (L, 1.0 + zh[2]), (P, -2 * zh[0]), (Q, -2 * zh[1]), (n + m, -1.0)):
                rows.append(m)
                cols.append(j)
                vals.append(v)
        cut = sp.csc_matrix((vals, (rows, cols)), shape=(nb, n + nb))
        A = sp.vstack([A0[:n_eq + n_in], cut, sig_nonneg, A0[n_eq + n_in:]]).tocsc()
        c = np.concatenate([prog.c, np.full(nb, mu)])
        status, xs, iters = _run(c, A, b, cones, opts)
        total_iters += iters
        if status not in ("Solved", "AlmostSolved"):
            break
        x = xs[:n]
        sigma = xs[n:]
        obj = float(prog.c @ x)
        gap = max((g[0] for g in _gaps(prog, x).values()), default=0.0)
        if gap <= opts.exact_tol and float(sigma.max(initial=0.0)) <= opts.exact_tol:
            good = x
            if prev_obj is not None and abs(obj - prev_obj) <= opts.ccp_obj_tol:
                return x, k, total_iters, True
        prev_obj = obj
        mu = min(mu * opts.ccp_growth, opts.ccp_penalty_max)
    if good is not None:
        return good, k, total_iters, True
    return x, k, total_iters, False


def _empty(status, solver_status, iters, ccp=0) -> Solution:
    nan = float("nan")
    return Solution(status, (nan, nan), nan, {}, {}, {}, {}, iters, ccp, solver_status)


def _extract(prog: ConvexProgram, x: np.ndarray, solver_status: str, iters: int, ccp: int) -> Solution:
    idx = prog.index
    base = prog.base
    res = {}
    for r in idx["resources"]:
        p, q = x[idx["p"][r.id]] * base, x[idx["q"][r.id]] * base
        res[r.id] = (p, q, p, q)
    w = {b: float(x[i]) for b, i in idx["w"].items()}
    flows = {b: (x[idx["P"][b]] * base, x[idx["Q"][b]] * base, float(x[idx["l"][b]])) for b in idx["order"][1:]}
    # relative residual per branch, signed: positive means the cone is slack
    gaps = {b: g / d if d > 0 else 0.0 for b, (g, _, d) in _gaps(prog, x).items()}
    s_imp = (float(x[idx["p_import"]] * base), float(x[idx["q_import"]] * base))
    if prog.direction is not None:
        obj = prog.direction[0] * s_imp[0] + prog.direction[1] * s_imp[1]
    else:
        obj = s_imp[0] if "p_import" in prog.spec.objective else s_imp[1]
    return Solution("optimal", s_imp, obj, res, w, flows, gaps, iters, ccp, solver_status, x)


def with_dispatch(sol: Solution, snap: der.Snapshot, resources) -> Solution:
    """Fill per-resource deviations relative to the snapshot dispatch."""
    out = {}
    for r in resources:
        if r.id not in sol.resources:
            continue
        p, q, _, _ = sol.resources[r.id]
        d = snap.point(r)
        out[r.id] = (p, q, p - d.p_lambda, q - d.q_lambda)
    sol.resources = out
    return sol


def cone_tightness(sol: Solution) -> float:
    """Largest relative relaxation residual over branches.

    Measures |(w + l) - ||(2P, 2Q, w - l)|| / (w + l), so both cone
    violation and relaxation slack count.
    """
    if not sol.ok:
        raise OpfError("cone tightness needs an optimal solution")
    if not sol.cone_gap:
        return 0.0
    return max(abs(g) for g in sol.cone_gap.values())


def solve_spec(net: Network, snap: der.Snapshot, spec: SubproblemSpec, resources=None,
               opts: SolverOptions | None = None, arc_segments: int = 16) -> Solution:
    prog = build_subproblem(net, snap, spec, resources, arc_segments)
    sol = solve(prog, opts)
    if sol.ok:
        with_dispatch(sol, snap, prog.index["resources"])
    return sol
