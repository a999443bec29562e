"""Command line front end.

Every subcommand writes a JSON summary (and, where natural, CSV rows and
a PNG figure) next to the chosen output stem, and exits 0 only when its
structural assertions pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import mc, report, rng
from .cover import (choose_r, is_strong_covering, is_weak_covering,
                    quotient, resolve_action, tame_radius)
from .coupling import run_coupling
from .enhance import ModelParams, exact_theta
from .graphs import ball, resolve_graph


def _int_list(text: str):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _out_stem(args, default: str) -> str:
    out = args.out or default
    root, ext = os.path.splitext(out)
    return root if ext else out


def _emit(stem: str, summary: dict, rows=None, echo=True):
    report.write_json(stem + ".json", summary)
    if rows is not None:
        report.write_csv(stem + ".csv", rows)
    if echo:
        json.dump(report._jsonable(summary), sys.stdout, indent=2,
                  sort_keys=True)
        print()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="percolab",
        description="Enhanced percolation laboratory: quotients, "
                    "couplings, pivotal surgery and critical estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, *, graph=True, action=False, pair=False):
        if graph:
            sp.add_argument("--graph", default="hypercubic:2",
                            help="graph spec, e.g. hypercubic:2, tree:3, "
                                 "quotient:z3-slab2")
        if action:
            sp.add_argument("--action", default=None,
                            help="action spec, e.g. translate:0,0,2")
        if pair:
            sp.add_argument("--pair", default="z-period2",
                            help=f"built-in pair: {sorted(mc.PAIRS)}")
        sp.add_argument("--p", default="0.5", help="edge density (csv list)")
        sp.add_argument("--s", type=float, default=0.0,
                        help="mark density")
        sp.add_argument("--r", type=int, default=1, help="enhancement range")
        sp.add_argument("--L", default="8",
                        help="truncation radius (csv list / schedule)")
        sp.add_argument("--samples", type=int, default=2000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=None, help="output stem or file")

    sp = sub.add_parser("quotient-build",
                        help="build a quotient graph and summarize it")
    common(sp, action=True)

    sp = sub.add_parser("verify-cover",
                        help="check the covering-map hypotheses")
    common(sp, action=True)

    sp = sub.add_parser("sweep", help="theta over a (p, L) grid")
    common(sp)

    sp = sub.add_parser("pc-estimate", help="critical point interval")
    common(sp)
    sp.add_argument("--tol", type=float, default=0.004)

    sp = sub.add_parser("couple-verify",
                        help="audited joint exploration campaign")
    common(sp, graph=False, pair=True)
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--marks", type=float, default=None,
                    help="override the mark density (kept admissible)")
    sp.add_argument("--horizon", type=int, default=None)
    sp.add_argument("--dump-transcript", default=None,
                    help="write one full transcript to this path")
    sp.add_argument("--verify-transcript", default=None,
                    help="re-run and byte-compare against this dump")

    sp = sub.add_parser("oracle-check",
                        help="Monte Carlo against exact enumeration")
    common(sp)

    sp = sub.add_parser("surgery-test",
                        help="random pivotal instances through the "
                             "window rebuild")
    common(sp)

    sp = sub.add_parser("gap", help="critical gap across a quotient")
    common(sp, graph=False, pair=True)
    sp.add_argument("--tol", type=float, default=0.004)
    return ap


# -- subcommand bodies -------------------------------------------------


def _cmd_quotient_build(args) -> int:
    g = resolve_graph(args.graph)
    a = resolve_action(args.action or "translate:2")
    h, m = quotient(g, a)
    sizes = {d: len([v for v, dd in ball(h, h.root, 4).dist.items()
                     if dd == d]) for d in range(5)}
    summary = dict(command="quotient-build", source=g.name, action=a.name,
                   quotient=h.name, root=repr(h.root),
                   degree_bound=h.degree_bound, finite=h.finite,
                   sphere_sizes=sizes, ok=True)
    _emit(_out_stem(args, "quotient-build"), summary)
    return 0


def _cmd_verify_cover(args) -> int:
    g = resolve_graph(args.graph)
    a = resolve_action(args.action or "translate:2")
    h, m = quotient(g, a)
    weak = is_weak_covering(m, sample_radius=2)
    strong = is_strong_covering(m, sample_radius=2)
    R = tame_radius(m, search_cap=50_000)
    r = choose_r(m, cap=50_000)
    # the standing hypotheses need weak covering + tame fibres; strong
    # covering is informational (it fails for period-2 translations)
    ok = weak.passed and R is not None
    summary = dict(command="verify-cover", source=g.name, quotient=h.name,
                   weak=weak, strong=strong, tame_radius=R,
                   pattern_range=r, ok=ok)
    _emit(_out_stem(args, "verify-cover"), summary)
    return 0 if ok else 1


def _cmd_sweep(args) -> int:
    h = mc._resolve_any(args.graph)
    grid = [ModelParams(p=p, s=args.s, r=args.r, L=L)
            for L in _int_list(args.L) for p in _float_list(args.p)]
    rows = mc.sweep(h, grid, args.samples, args.seed,
                    workers=args.workers, graph_spec=args.graph)
    stem = _out_stem(args, "sweep")
    report.plot_sweep(rows, stem + ".png", title=h.name)
    summary = dict(command="sweep", graph=h.name, rows=len(rows),
                   s=args.s, r=args.r, seed=args.seed, ok=True)
    _emit(stem, summary, rows=rows)
    return 0


def _cmd_pc_estimate(args) -> int:
    est = mc.pc_bisect(None, args.r, args.s, _int_list(args.L),
                       args.samples, args.seed, tol=args.tol,
                       workers=args.workers, graph_spec=args.graph)
    stem = _out_stem(args, "pc-estimate")
    report.plot_pc(est, stem + ".png", title=args.graph)
    ok = est.width < 0.2 and 0 < est.point < 1
    summary = dict(command="pc-estimate", graph=args.graph, point=est.point,
                   lo=est.lo, hi=est.hi, width=est.width,
                   crossings=list(est.crossings), n=est.n, seed=est.seed,
                   ok=ok)
    _emit(stem, summary, rows=list(est.rows))
    return 0 if ok else 1


def _cmd_couple_verify(args) -> int:
    stem = _out_stem(args, "couple-verify")
    p = _float_list(args.p)[0]
    if args.dump_transcript or args.verify_transcript:
        bundle = mc.build_pair(args.pair)
        from .coupling import default_params
        params = default_params(bundle.map, p, args.epsilon,
                                args.r, args.horizon or 3 * args.r + 2)
        t = run_coupling(bundle.map, bundle.source.root, params, args.seed)
        lines = t.to_lines()
        if args.dump_transcript:
            with open(args.dump_transcript, "w") as fh:
                fh.write("\n".join(lines) + "\n")
        if args.verify_transcript:
            with open(args.verify_transcript) as fh:
                recorded = fh.read().splitlines()
            if recorded != lines:
                print("transcript mismatch", file=sys.stderr)
                return 1
        _emit(stem, dict(command="couple-verify", pair=args.pair,
                         transcript_events=len(t.events),
                         truncated=t.truncated, ok=True))
        return 0
    rep = mc.couple_verify_campaign(
        args.pair, args.samples, args.seed, p, args.epsilon,
        horizon=args.horizon, s=args.marks, workers=args.workers)
    summary = dict(command="couple-verify", report=rep, ok=rep.ok)
    _emit(stem, summary)
    return 0 if rep.ok else 1


def _cmd_oracle_check(args) -> int:
    h = resolve_graph(args.graph)
    rows = []
    worst = 0.0
    for p in _float_list(args.p):
        for L in _int_list(args.L):
            params = ModelParams(p=p, s=args.s, r=args.r, L=L)
            exact = float(exact_theta(h, [h.root], params))
            sd = rng.derive(args.seed, ("oracle", p, L))
            est = mc.theta_mc(h, None, params, args.samples, sd)
            z = abs(est.value - exact) / max(est.stderr, 1e-12)
            worst = max(worst, z)
            rows.append(dict(p=p, s=args.s, L=L, theta=est.value,
                             stderr=est.stderr, n=args.samples, seed=sd,
                             exact=exact, z=z))
    ok = worst <= 3.5
    summary = dict(command="oracle-check", graph=h.name,
                   instances=len(rows), worst_z=worst, ok=ok)
    _emit(_out_stem(args, "oracle-check"), summary, rows=rows)
    return 0 if ok else 1


def _cmd_surgery_test(args) -> int:
    h = mc._resolve_any(args.graph)
    L = _int_list(args.L)[0]
    rep = mc.surgery_campaign(h, args.r, L, args.samples, args.seed)
    ok = rep.failures == 0 and rep.instances > 0
    summary = dict(command="surgery-test", report=rep, ok=ok)
    _emit(_out_stem(args, "surgery-test"), summary)
    return 0 if ok else 1


def _cmd_gap(args) -> int:
    rep = mc.strict_gap_experiment(
        args.pair, n=args.samples, seed=args.seed, workers=args.workers,
        s=args.s, L_schedule=_int_list(args.L), tol=args.tol)
    stem = _out_stem(args, "gap")
    if not rep.refused:
        report.plot_gap(rep, stem + ".png")
    summary = dict(command="gap", report=rep, ok=rep.ok)
    _emit(stem, summary, rows=list(rep.rows))
    return 0 if rep.ok else 1


_COMMANDS = {
    "quotient-build": _cmd_quotient_build,
    "verify-cover": _cmd_verify_cover,
    "sweep": _cmd_sweep,
    "pc-estimate": _cmd_pc_estimate,
    "couple-verify": _cmd_couple_verify,
    "oracle-check": _cmd_oracle_check,
    "surgery-test": _cmd_surgery_test,
    "gap": _cmd_gap,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
