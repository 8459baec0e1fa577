"""Command-line driver.

Exit codes: 0 success, 2 usage error, 3 runtime or numerical failure.
Human-readable summaries go to stdout, diagnostics to stderr, and
machine-readable artifacts only to the files named by flags.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import graph as gm
from .analysis import equivalence_audit, error_trace, rate_envelope, y1_bound
from .assembly import assemble_information
from .dwls import dwls_run
from .gbp import gbp_run
from .oracle import (UnidentifiableError, dominance_certificate, rate_bound, solve_global)
from .scenario import (TOPOLOGIES, ScenarioError, ScenarioSpec, export_trace_csv, generate,
                       load_scenario, save_scenario, spec_meta, write_plot_data)
from .trace import BREAKDOWN

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _graph_summary(g) -> str:
    parts = [f"n={g.n}", f"edges={len(g.edges)}"]
    connected = gm.is_connected(g)
    parts.append("acyclic" if gm.is_acyclic(g) else "cyclic")
    parts.append(f"diameter={gm.diameter(g)}" if connected else "disconnected")
    return " ".join(parts)


def cmd_generate(args) -> int:
    if args.topology != "loopy13" and args.nodes is None:
        raise UsageError("--nodes is required for this topology")
    if args.nodes is not None and args.nodes < 1:
        raise UsageError("--nodes must be at least 1")
    dims = args.dim if len(args.dim) != 1 else args.dim[0]
    spec = ScenarioSpec(
        topology=args.topology,
        n=args.nodes or 0,
        dims=dims,
        seed=args.seed,
        self_density=args.self_density,
        zero_self=args.zero_self,
        self_noise=args.self_noise,
        edge_noise=args.edge_noise,
        extra_edges=args.extra_edges,
        edges=tuple(tuple(map(int, e.split("-"))) for e in args.edges),
    )
    try:
        g, truth = generate(spec)
    except ScenarioError as exc:
        _err(f"generation failed: {exc}")
        return EXIT_RUNTIME
    if args.output:
        save_scenario(args.output, g, truth, spec_meta(spec))
        print(f"wrote {args.output}")
    print(_graph_summary(g))
    return EXIT_OK


def _load(path):
    try:
        return load_scenario(path)
    except FileNotFoundError:
        raise UsageError(f"scenario file not found: {path}") from None


def cmd_run(args) -> int:
    g, _, _ = _load(args.scenario)
    info = assemble_information(g)
    try:
        sol = solve_global(info)
    except UnidentifiableError as exc:
        _err(f"oracle failed, not iterating: {exc}")
        return EXIT_RUNTIME
    bound = None
    if info.is_scalar and info.n:
        bound = rate_bound(info)
    acyclic = gm.is_acyclic(g)
    algos = ["dwls", "gbp"] if args.algorithm == "both" else [args.algorithm]
    log = args.algorithm == "both"
    traces = {}
    status = EXIT_OK
    for algo in algos:
        run = dwls_run if algo == "dwls" else gbp_run
        rounds = args.max_rounds + (1 if algo == "gbp" and log else 0)
        tr = run(info, rounds, args.tol, log_messages=log)
        traces[algo] = tr
        err = error_trace(tr, sol, hit_tol=args.tol)
        print(f"[{algo}] stop: {tr.stop_reason} after {tr.rounds} rounds")
        if tr.stop_reason == BREAKDOWN:
            bd = tr.breakdown
            _err(f"[{algo}] breakdown at round {bd.round}, node {bd.node}: {bd.detail}")
            status = EXIT_RUNTIME
        if err.rounds:
            last = err.y1[-1]
            print(f"[{algo}] final y1: {'exact' if last == -math.inf else f'{last:.3f}'}"
                  + (" (extended metric)" if err.extended_metric else ""))
            hits = [h for h in err.first_hit]
            if all(h is not None for h in hits):
                print(f"[{algo}] converged at round {max(hits)} (all nodes within tol of x*)")
        envelope = None
        if bound is not None and acyclic:
            print(f"[{algo}] rho(|Omega|) = {bound.rho:.6f}; acyclic graph, exact after "
                  f"diameter={gm.diameter(g)} rounds, rate verdict not applicable")
        if bound is not None and not acyclic:
            env = rate_envelope(err, bound)
            print(f"[{algo}] {env.summary()}")
            if env.applicable:
                envelope = env.envelope
                if args.plot_data and algo == algos[0]:
                    write_plot_data(err, y1_bound(err.rounds, bound.rho, env.C), args.plot_data)
        if args.plot_data and algo == algos[0] and (bound is None or acyclic):
            write_plot_data(err, None, args.plot_data)
        if args.csv:
            path = Path(args.csv)
            if len(algos) > 1:
                path = path.with_name(f"{path.stem}_{algo}{path.suffix}")
            try:
                export_trace_csv(tr, err, path, envelope)
            except OSError as exc:
                _err(str(exc))
                return EXIT_RUNTIME
            print(f"[{algo}] wrote {path}")
    if len(algos) == 2:
        rep = equivalence_audit(traces["dwls"], traces["gbp"], gamma=info.gamma)
        print(rep.summary())
        if not rep.passed:
            status = EXIT_RUNTIME
    return status


def cmd_audit(args) -> int:
    g, _, _ = _load(args.scenario)
    info = assemble_information(g)
    dw = dwls_run(info, args.max_rounds, 0.0, log_messages=True)
    bp = gbp_run(info, args.max_rounds + 1, 0.0, log_messages=True)
    rep = equivalence_audit(dw, bp, gamma=info.gamma)
    for t, eg, pg, mg in zip(rep.rounds, rep.estimate_gap, rep.precision_gap, rep.message_gap or []):
        print(f"round {t:4d}: estimate {eg:.2e}  precision {pg:.2e}  messages {mg:.2e}")
    print(rep.summary())
    for tr in (dw, bp):
        if tr.breakdown is not None:
            _err(f"[{tr.algorithm}] {tr.breakdown}")
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def analyze_report(g) -> dict:
    info = assemble_information(g)
    rep: dict = {
        "nodes": g.n,
        "edges": len(g.edges),
        "connected": gm.is_connected(g),
        "acyclic": gm.is_acyclic(g),
        "diameter": gm.diameter(g) if gm.is_connected(g) else None,
        "psi_shape": [int(info.offsets[-1])] * 2,
        "self_measured_nodes": sum(g.has_self_information(i) for i in range(1, g.n + 1)),
    }
    try:
        rep["psi_condition"] = solve_global(info).psi_condition
    except UnidentifiableError:
        rep["psi_condition"] = None
    if not info.is_scalar:
        rep.update(comparison_pd="n/a (vector variables)", rho="n/a (vector variables)")
        return rep
    cert = dominance_certificate(info)
    rep["comparison_pd"] = cert.is_pd
    rep["comparison_min_eig"] = cert.min_eigenvalue
    rep["d_scaling"] = None if cert.d_scaling is None else cert.d_scaling.tolist()
    rep["margin"] = cert.strictness_margin
    try:
        rep["rho"] = rate_bound(info).rho
    except UnidentifiableError:
        rep["rho"] = None
    return rep


def cmd_analyze(args) -> int:
    g, _, _ = _load(args.scenario)
    rep = analyze_report(g)
    print(f"connected: {'yes' if rep['connected'] else 'no'}")
    print(f"acyclic: {'yes' if rep['acyclic'] else 'no'}")
    print(f"diameter: {rep['diameter'] if rep['diameter'] is not None else 'n/a (disconnected)'}")
    cond = rep["psi_condition"]
    print(f"Psi: {rep['psi_shape'][0]}x{rep['psi_shape'][1]}, condition number "
          + ("inf (singular)" if cond is None else f"{cond:.4g}"))
    if rep["comparison_pd"] == "n/a (vector variables)":
        print("comparison matrix PD: n/a (vector variables)")
        print("rho(|Omega|): n/a (vector variables)")
    else:
        print(f"comparison matrix PD: {'yes' if rep['comparison_pd'] else 'no'} "
              f"(min eigenvalue {rep['comparison_min_eig']:.4g})")
        if rep["d_scaling"] is not None:
            d = ", ".join(f"{v:.4g}" for v in rep["d_scaling"])
            print(f"dominance scaling d: [{d}], margin {rep['margin']:.4g}")
        rho = rep["rho"]
        if rho is None:
            print("rho(|Omega|): n/a (a node carries no information)")
        else:
            print(f"rho(|Omega|): {rho:.6f} ({'< 1' if rho < 1 else '>= 1'})")
    if rep["self_measured_nodes"] == 0:
        print("warning: no node has a self measurement; the system is unidentifiable", file=sys.stderr)
    elif not rep["connected"]:
        print("warning: graph is disconnected; the system is unidentifiable", file=sys.stderr)
    if args.output:
        Path(args.output).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wlsbp", description="Distributed WLS / Gaussian BP toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a random scenario")
    gen.add_argument("--topology", choices=TOPOLOGIES, default="random_connected")
    gen.add_argument("--nodes", type=int)
    gen.add_argument("--dim", type=_int_list, default=(1,), help="node dimension, or one per node (comma list)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--self-density", type=float, default=0.85)
    gen.add_argument("--zero-self", type=_int_list, default=(), help="nodes without a self measurement")
    gen.add_argument("--self-noise", type=_positive_float, default=1.0)
    gen.add_argument("--edge-noise", type=_positive_float, default=1.0)
    gen.add_argument("--extra-edges", type=int)
    gen.add_argument("--edge", dest="edges", action="append", default=[], metavar="I-J",
                     help="edge for the explicit topology (repeatable)")
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_generate)

    run = sub.add_parser("run", help="run the engines on a scenario")
    run.add_argument("scenario")
    run.add_argument("--algorithm", choices=("dwls", "gbp", "both"), default="dwls")
    run.add_argument("--max-rounds", type=int, default=500)
    run.add_argument("--tol", type=float, default=1e-9)
    run.add_argument("--csv", help="trace CSV path (suffixed per algorithm with 'both')")
    run.add_argument("--plot-data", help="round/y1/bound data file for plotting")
    run.set_defaults(func=cmd_run)

    aud = sub.add_parser("audit", help="round-by-round equivalence audit of both engines")
    aud.add_argument("scenario")
    aud.add_argument("--max-rounds", type=int, default=30)
    aud.set_defaults(func=cmd_audit)

    ana = sub.add_parser("analyze", help="matrix and graph analysis of a scenario")
    ana.add_argument("scenario")
    ana.add_argument("-o", "--output", help="JSON report path")
    ana.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "max_rounds", 1) < 1:
        _err("--max-rounds must be at least 1")
        return EXIT_USAGE
    if getattr(args, "tol", 0.0) < 0:
        _err("--tol must be non-negative")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (ScenarioError, gm.GraphError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
