"""Exact radial power flow by backward/forward sweep, vectorized over samples.

Works in per unit on the network base with the branch-flow (DistFlow)
magnitude relations, which are exact on a radial network once angles are
eliminated.  Independent of the convex program in :mod:`dernoe.opf`; used as
the Monte Carlo oracle and to locate the dispatch point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network


@dataclass
class SweepTopology:
    """Index arrays for a sweep, buses in breadth-first order (root first)."""

    order: list[str]
    parent: np.ndarray  # parent position, -1 for the root
    r: np.ndarray  # parent-branch resistance per bus position (pu)
    x: np.ndarray
    s_max: np.ndarray  # pu
    tapped: np.ndarray  # bool per bus position
    t_range: np.ndarray  # (n, 2) tap ratio bounds
    w_min: np.ndarray
    w_max: np.ndarray

    @classmethod
    def of(cls, net: Network) -> "SweepTopology":
        tree = net.tree()
        pos = {b: i for i, b in enumerate(tree.order)}
        n = len(tree.order)
        parent = np.full(n, -1)
        r, x, smax = np.zeros(n), np.zeros(n), np.full(n, np.inf)
        tapped = np.zeros(n, bool)
        t_range = np.ones((n, 2))
        for b, k in tree.parent_branch.items():
            i = pos[b]
            br = net.branches[k]
            parent[i] = pos[tree.parent[b]]
            r[i], x[i], smax[i] = br.r, br.x, br.s_max / net.base
            if br.tap is not None:
                tapped[i] = True
                t_range[i] = (br.tap.t_min, br.tap.t_max)
        bm = net.bus_map
        w_min = np.array([bm[b].v_min ** 2 for b in tree.order])
        w_max = np.array([bm[b].v_max ** 2 for b in tree.order])
        return cls(list(tree.order), parent, r, x, smax, tapped, t_range, w_min, w_max)


@dataclass
class FlowResult:
    converged: np.ndarray  # (S,) bool
    p_import: np.ndarray  # (S,) MW
    q_import: np.ndarray  # (S,) MVAr
    w: np.ndarray  # (S, n) squared voltage, bus order as topology.order
    s_send: np.ndarray  # (S, n) apparent power at sending end of parent branch, pu
    s_recv: np.ndarray  # (S, n)
    iterations: int

    def feasible(self, topo: SweepTopology, tol: float = 1e-9) -> np.ndarray:
        ok = self.converged.copy()
        ok &= np.all(self.w >= topo.w_min - tol, axis=1) & np.all(self.w <= topo.w_max + tol, axis=1)
        lim = np.where(np.isfinite(topo.s_max), topo.s_max, np.inf)
        ok &= np.all(self.s_send <= lim + tol, axis=1) & np.all(self.s_recv <= lim + tol, axis=1)
        return ok


def _load_terms(net: Network, topo: SweepTopology):
    pos = {b: i for i, b in enumerate(topo.order)}
    ep = [(pos[d.bus], d.p0 / net.base, d.exp_p) for d in net.loads]
    eq = [(pos[d.bus], d.q0 / net.base, d.exp_q) for d in net.loads]
    return ep, eq


def run(net: Network, p_inj: np.ndarray, q_inj: np.ndarray, taps: np.ndarray | None = None,
        topo: SweepTopology | None = None, tol: float = 1e-11, max_iter: int = 200) -> FlowResult:
    """Solve S samples at once.

    `p_inj`, `q_inj` are (S, n) resource injections in MW / MVAr per bus
    position (generation positive).  `taps` is (S, n) ratio per bus position
    for its parent branch (ignored where untapped); defaults to 1.
    """
    topo = topo or SweepTopology.of(net)
    p_inj = np.atleast_2d(np.asarray(p_inj, float)) / net.base
    q_inj = np.atleast_2d(np.asarray(q_inj, float)) / net.base
    S, n = p_inj.shape
    t2 = np.ones((S, n)) if taps is None else np.where(topo.tapped, np.asarray(taps, float) ** 2, 1.0)
    ep, eq = _load_terms(net, topo)
    order = np.arange(n)
    par = topo.parent
    w = np.ones((S, n))
    P = np.zeros((S, n))  # sending-end flow on the parent branch of each bus
    Q = np.zeros((S, n))
    z2 = topo.r ** 2 + topo.x ** 2
    converged = np.zeros(S, bool)
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            pd = np.zeros((S, n))
            qd = np.zeros((S, n))
            for i, p0, e in ep:
                pd[:, i] += p0 * w[:, i] ** (e / 2)
            for i, q0, e in eq:
                qd[:, i] += q0 * w[:, i] ** (e / 2)
            # backward: accumulate net demand from the leaves
            Pr = pd - p_inj
            Qr = qd - q_inj
            P = np.zeros((S, n))
            Q = np.zeros((S, n))
            for j in order[::-1][:-1]:
                ell = (Pr[:, j] ** 2 + Qr[:, j] ** 2) / w[:, j]
                # losses from the receiving-end flow expressed at the sending voltage
                P[:, j] = Pr[:, j] + topo.r[j] * ell
                Q[:, j] = Qr[:, j] + topo.x[j] * ell
                Pr[:, par[j]] += P[:, j]
                Qr[:, par[j]] += Q[:, j]
            # forward: squared voltages from the root, w_root = 1
            w_new = np.ones((S, n))
            for j in order[1:]:
                wi = w_new[:, par[j]] * t2[:, j]
                ell = (P[:, j] ** 2 + Q[:, j] ** 2) / wi
                w_new[:, j] = wi - 2 * (topo.r[j] * P[:, j] + topo.x[j] * Q[:, j]) + z2[j] * ell
            bad = ~np.all(np.isfinite(w_new) & (w_new > 0.01), axis=1)
            delta = np.max(np.abs(w_new - w), axis=1)
            w = np.where(bad[:, None], np.nan, w_new)
            converged = (delta < tol) & ~bad
            if np.all(converged | bad):
                break
    # after the backward pass the root entry holds the net import
    p_imp, q_imp = Pr[:, 0], Qr[:, 0]
    s_send = np.hypot(P, Q)
    ell_all = np.zeros((S, n))
    for j in order[1:]:
        ell_all[:, j] = (P[:, j] ** 2 + Q[:, j] ** 2) / (w[:, par[j]] * t2[:, j])
    s_recv = np.hypot(P - topo.r * ell_all, Q - topo.x * ell_all)
    s_send[:, 0] = 0.0
    s_recv[:, 0] = 0.0
    return FlowResult(converged, p_imp * net.base, q_imp * net.base, w, s_send, s_recv, it)
