"""Command-line entry point: ``dernoe <command> [options]``.

Exit codes: 0 success, 2 bad input, 3 infeasible or empty envelope,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

from . import envelopes as env
from . import fixtures, market, opf, plot
from .geometry import area, contains
from .network import NetworkError, read_network, read_snapshot, validate

EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 2, 3, 4

BUILTINS = {
    "canonical": fixtures.canonical,
    "canonical_charged": fixtures.canonical_charged,
    "five_bus": fixtures.five_bus,
    "synthetic93": fixtures.synthetic_feeder,
}

_UNITS = {"s": 1.0, "min": 60.0, "h": 3600.0}


class InputError(Exception):
    pass


def parse_level(text: str, axis: str) -> float:
    """Parse one stack level.  Durations accept s/min/h suffixes.

    tau is returned in seconds, psi in hours; bare numbers are taken in
    the axis' native unit.
    """
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*(s|min|h)?\s*", text)
    if not m:
        raise InputError(f"cannot parse level {text!r}")
    try:
        v = float(m.group(1))
    except ValueError:
        raise InputError(f"cannot parse level {text!r}") from None
    unit = m.group(2)
    if unit is None:
        return v
    if axis == "cost":
        raise InputError(f"cost level {text!r} takes no unit")
    seconds = v * _UNITS[unit]
    return seconds if axis == "tau" else seconds / 3600.0


def parse_levels(text: str, axis: str) -> list[float]:
    parts = [p for p in (text or "").split(",") if p.strip()]
    if not parts:
        raise InputError("no levels given")
    return [parse_level(p, axis) for p in parts]


def load_inputs(args):
    name = args.network or "builtin:canonical"
    if name.startswith("builtin:"):
        key = name.split(":", 1)[1]
        if key not in BUILTINS:
            raise InputError(f"unknown builtin network {key!r}; available: {', '.join(BUILTINS)}")
        net, snap = BUILTINS[key]()
        if args.snapshot:
            snap = read_snapshot(args.snapshot, net)
        return net, snap
    net = read_network(name)
    errors = [d for d in validate(net) if d.severity == "error"]
    if errors:
        raise InputError("; ".join(str(d) for d in errors))
    if not args.snapshot:
        raise InputError("--snapshot is required with a network file")
    return net, read_snapshot(args.snapshot, net)


def _request(args, kind: str, **params) -> env.EnvelopeRequest:
    return env.EnvelopeRequest(kind, K=args.K, density=args.density,
                               refine_tol=getattr(args, "refine_tol", None), **params)


def _solver_opts(args) -> opf.SolverOptions:
    raw = getattr(args, "restarts", None)
    if not raw:
        return opf.SolverOptions()
    try:
        starts = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise InputError(f"--restarts: not a list of numbers: {raw!r}") from None
    if any(v <= 0 for v in starts):
        raise InputError("--restarts values must be positive")
    return opf.SolverOptions(ccp_restarts=starts)


def _params_from_args(args, kind: str) -> dict:
    out = {}
    for name in env.KIND_PARAMS.get(kind, ()):
        raw = getattr(args, name)
        if raw is None:
            raise InputError(f"--{name} is required for {kind} envelopes")
        out[name] = parse_level(raw, name)
    return out


def _emit(args, noes: list[tuple[str, env.Noe]], doc: dict, title: str = ""):
    fmt = args.format
    if fmt == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        text = plot.csv_rows(noes)
    else:
        marker = plot.marker_for(noes[0][1]) if noes else None
        text = plot.svg(noes, title, marker)
    _write(args.out, text)


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_compute(args) -> int:
    net, snap = load_inputs(args)
    params = _params_from_args(args, args.kind)
    req = _request(args, args.kind, **params)
    noe = env.compute(net, snap, req, opts=_solver_opts(args), jobs=args.jobs, timing=args.timing)
    if args.frame:
        noe = noe.in_frame(args.frame)
    _emit(args, [(args.kind, noe)], noe.to_json(), f"{args.kind} envelope")
    return 0


def cmd_stack(args) -> int:
    if args.kind not in env.STACK_AXIS:
        raise InputError(f"stacks are defined for {', '.join(env.STACK_AXIS)}")
    axis = env.STACK_AXIS[args.kind]
    levels = parse_levels(args.levels, axis)
    net, snap = load_inputs(args)
    stack = env.contour_stack(net, snap, args.kind, levels, K=args.K, density=args.density,
                              jobs=args.jobs, timing=args.timing)
    noes = [(f"{axis}={v:g}", n) for v, n in stack.levels if n is not None]
    if not noes:
        raise env.EnvelopeError("every level of the stack is empty")
    doc = stack.to_json()
    doc["violations"] = env.stack_violations(stack, args.kind)
    _emit(args, noes, doc, f"{args.kind} stack")
    return 0


def cmd_aggregate(args) -> int:
    if args.replicated:
        return _replicated_benchmark(args)
    if not args.children:
        raise InputError("aggregate needs --children files or --replicated N")
    children = []
    for path in args.children:
        try:
            with open(path, encoding="utf-8") as fh:
                children.append(env.Noe.from_json(json.load(fh)))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: {exc}") from None
    net, snap = load_inputs(args)
    req = _request(args, "feasibility")
    noe = env.aggregate_upstream(children, net, snap, req, jobs=args.jobs, timing=args.timing)
    _emit(args, [("system", noe)], noe.to_json(), "aggregated envelope")
    return 0


def _replicated_benchmark(args) -> int:
    n = args.replicated
    if n < 1:
        raise InputError("--replicated must be >= 1")
    flat, flat_snap, feeders, upstream = fixtures.replicated(n, args.feeder_buses)
    req = _request(args, "feasibility")
    t0 = time.perf_counter()
    flat_noe = env.boundary_sweep(flat, flat_snap, req, jobs=args.jobs)
    t_flat = time.perf_counter() - t0
    t0 = time.perf_counter()
    children = []
    for fnet, fsnap in feeders:
        children.append(env.boundary_sweep(fnet, fsnap, req, jobs=args.jobs))
    sys_noe = env.aggregate_upstream(children, upstream, flat_snap, req, jobs=args.jobs)
    t_hier = time.perf_counter() - t0
    report = {"feeders": n, "system_buses": len(flat.buses), "flat_time_s": t_flat,
              "hierarchical_time_s": t_hier, "flat_area": area(flat_noe.boundary),
              "hierarchical_area": area(sys_noe.boundary)}
    _write(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_bidstack(args) -> int:
    svc = market.service(args.service)
    levels = parse_levels(args.levels, "cost")
    net, snap = load_inputs(args)
    stack = market.bid_stack(net, snap, svc, levels, K=args.K, density=args.density, jobs=args.jobs)
    if args.format == "csv":
        rows = ["tranche,volume_mw,price_per_mwh"]
        rows += [f"{i},{v!r},{p!r}" for i, (v, p) in enumerate(stack.tranches)]
        _write(args.out, "\n".join(rows) + "\n")
    else:
        _write(args.out, json.dumps(stack.to_json(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_verify(args) -> int:
    if args.samples < 1:
        raise InputError("--samples must be >= 1")
    net, snap = load_inputs(args)
    noe = env.boundary_sweep(net, snap, _request(args, "feasibility"), opts=_solver_opts(args), jobs=args.jobs)
    counts = sorted({int(c) for c in (args.trend or "").split(",") if c.strip()} | {args.samples})
    trend = []
    for n in counts:
        oracle = env.monte_carlo_oracle(net, snap, n, seed=args.seed)
        inside = sum(contains(noe.boundary, (float(p), float(q)), args.tol) for p, q in oracle.points)
        ratio = area(oracle.hull) / area(noe.boundary) if oracle.hull is not None and area(noe.boundary) > 0 else 0.0
        trend.append({"samples": n, "feasible": oracle.feasible, "diverged": oracle.diverged,
                      "inside": inside,
                      "inside_fraction": inside / oracle.feasible if oracle.feasible else None,
                      "area_ratio": ratio})
    report = {"seed": args.seed, "tolerance_mw": args.tol, "noe_area": area(noe.boundary), "runs": trend}
    _write(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep_k(args) -> int:
    ks = sorted({int(k) for k in args.ks.split(",") if k.strip()})
    if not ks or ks[0] < 1:
        raise InputError("--ks needs positive integers")
    net, snap = load_inputs(args)
    rows = []
    for k in ks:
        t0 = time.perf_counter()
        noe = env.boundary_sweep(net, snap, env.EnvelopeRequest("feasibility", K=k), jobs=args.jobs)
        rows.append((k, area(noe.boundary), time.perf_counter() - t0, len(noe.boundary.vertices)))
    ref = rows[-1][1]
    out = ["k,area,normalized_area,wall_time_s,vertices"]
    for k, a, t, nv in rows:
        norm = a / ref if ref > 0 else 0.0
        # wall time varies run to run; omit it when byte-stable output is wanted
        t_txt = f"{t:.3f}" if args.timing else ""
        out.append(f"{k},{a!r},{norm!r},{t_txt},{nv}")
    _write(args.out, "\n".join(out) + "\n")
    return 0


def _add_quality(p):
    p.add_argument("--refine-tol", type=float, default=None,
                   help="add support-direction points until no hull edge moves by more than this, MW")
    p.add_argument("--restarts", help="extra starting penalties for the tightening pass, e.g. 1e-3,0.1")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network JSON file or builtin:canonical|canonical_charged|five_bus|synthetic93")
    common.add_argument("--snapshot", help="snapshot JSON file")
    common.add_argument("--out", "-o", help="output path (default stdout)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel solves")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    common.add_argument("-K", type=int, default=None, help="reactive levels in the boundary sweep")
    common.add_argument("--density", type=float, default=env.DEFAULT_DENSITY,
                        help="levels per MVAr of reactive range when -K is absent")
    common.add_argument("--timing", action="store_true", help="record wall times (breaks byte-stability)")

    p = argparse.ArgumentParser(prog="dernoe", description="Nodal operating envelopes for DER aggregations")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", parents=[common], help="one envelope")
    c.add_argument("--kind", required=True, choices=env.KINDS)
    c.add_argument("--tau", help="response time, e.g. 30, 30s, 5min")
    c.add_argument("--psi", help="sustain duration, e.g. 0.5, 10min, 2h (bare numbers in hours)")
    c.add_argument("--cost", help="deviation cost cap, $/h")
    c.add_argument("--frame", choices=env.FRAMES)
    _add_quality(c)
    c.set_defaults(fn=cmd_compute)

    s = sub.add_parser("stack", parents=[common], help="nested contours over one parameter")
    s.add_argument("--kind", required=True, choices=sorted(env.STACK_AXIS))
    s.add_argument("--levels", required=True, help="comma-separated levels")
    s.set_defaults(fn=cmd_stack)

    a = sub.add_parser("aggregate", parents=[common], help="hierarchical aggregation")
    a.add_argument("--children", nargs="*", help="child envelope JSON files")
    a.add_argument("--replicated", type=int, help="run the replicated-feeder timing benchmark with N feeders")
    a.add_argument("--feeder-buses", type=int, default=93)
    a.set_defaults(fn=cmd_aggregate)

    b = sub.add_parser("bidstack", parents=[common], help="price-volume tranches for a service")
    b.add_argument("--service", required=True)
    b.add_argument("--levels", required=True, help="increasing cost caps, $/h")
    b.set_defaults(fn=cmd_bidstack)

    v = sub.add_parser("verify", parents=[common], help="Monte Carlo power-flow containment check")
    v.add_argument("--samples", type=int, default=10000)
    v.add_argument("--trend", help="extra sample counts for the area-ratio trend, comma-separated")
    v.add_argument("--tol", type=float, default=1e-4, help="containment tolerance, MW")
    _add_quality(v)
    v.set_defaults(fn=cmd_verify)

    k = sub.add_parser("sweep-k", parents=[common], help="envelope area against K")
    k.add_argument("--ks", default=",".join(str(i) for i in range(5, 101, 5)))
    k.set_defaults(fn=cmd_sweep_k)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.fn(args)
    except (InputError, NetworkError, market.MarketError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except env.EnvelopeError as exc:
        msg = str(exc)
        code = EXIT_INFEASIBLE if "empty" in msg or "excludes" in msg else EXIT_INPUT
        print(f"error: {msg}", file=sys.stderr)
        return code
    except opf.OpfError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
