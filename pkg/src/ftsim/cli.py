"""Command line entry point: ``ftsim run|sweep|paths|mapping|table-check``."""

from __future__ import annotations

import argparse
import os
import sys

from .errors import AuditError, ConfigError, FlowControlError, RoutingError, TopologyError
from .harness import export_csv, load_config, run_spec, sweep, to_csv
from .queuing import QueueScheme, mapping_table
from .routing import RoutingConfig
from .topology import RLFTParams, build_rlft, enumerate_shortest_paths, table_check


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    spec = load_config(args.config)
    series = run_spec(spec, seed=args.seed)
    if args.out:
        export_csv(series, args.out)
    else:
        sys.stdout.write(to_csv(series))
    print(f"{spec.config_id} steady-state throughput {series.steady_state():.6f}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    specs = [load_config(p) for p in args.config]
    rows = sweep(specs, jobs=args.jobs)
    _emit(to_csv(rows), args.out)
    return 0


def cmd_paths(args) -> int:
    rlft = build_rlft(RLFTParams(args.ports, args.stages))
    lines = []
    for path in enumerate_shortest_paths(rlft, args.src, args.dst):
        lines.append(" ".join(f"sw({h.switch.stage},{h.switch.index}):{h.out_port}" for h in path))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _routing_from_args(args) -> RoutingConfig:
    stage = "all" if args.stage in ("all", "*") else int(args.stage)
    trig = "NoTH" if args.mode != "adaptive" else args.triggering
    return RoutingConfig(args.mode, trig, ltth=1, htth=2, stage=stage, delta=args.delta)


def cmd_mapping(args) -> int:
    rlft = build_rlft(RLFTParams(args.ports, args.stages))
    routing = _routing_from_args(args).validate(rlft.arity, 1 << 30)
    scheme = QueueScheme(args.scheme, args.vcs)
    table = mapping_table(scheme, rlft, routing)
    lines = ["stage,switch,port,vc: {dst...}"]
    for ref in sorted(table):
        for vc, dsts in enumerate(table[ref]):
            body = " ".join(str(d) for d in sorted(dsts))
            lines.append(f"{ref.stage},{ref.index},{ref.port},{vc}: {{{body}}}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_table_check(args) -> int:
    rlft = build_rlft(RLFTParams(args.ports, args.stages))
    cells = table_check(rlft, args.delta)
    lines = []
    failed = 0
    rows = dict.fromkeys(c.row for c in cells)
    for row in rows:
        mine = [c for c in cells if c.row == row]
        bad = [c for c in mine if not c.ok]
        failed += len(bad)
        verdict = "PASS" if not bad else "FAIL"
        detail = " ".join(f"{c.column}={c.expected}" + ("" if c.ok else f"(got {','.join(map(str, c.observed))})") for c in mine)
        lines.append(f"{verdict} {row}: {detail}")
    _emit("\n".join(lines) + "\n", args.out)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftsim", description="Fat-tree congestion simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration and write its throughput series")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="steady-state throughput over sweep.loads and sweep.seeds")
    p.add_argument("config", nargs="+")
    p.add_argument("--jobs", type=int, default=None, help="parallel runs (default: sweep.jobs)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    def topo(p):
        p.add_argument("--ports", "-P", type=int, required=True)
        p.add_argument("--stages", "-T", type=int, required=True)
        p.add_argument("--out")

    p = sub.add_parser("paths", help="list the shortest paths between two nodes")
    topo(p)
    p.add_argument("src", type=int)
    p.add_argument("dst", type=int)
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("mapping", help="destinations that can occupy each buffer VC")
    topo(p)
    p.add_argument("--scheme", default="1Q")
    p.add_argument("--vcs", type=int, default=None)
    p.add_argument("--mode", choices=("deterministic", "oblivious", "adaptive"), default="deterministic")
    p.add_argument("--triggering", choices=("NoTH", "TH", "2TH"), default="NoTH")
    p.add_argument("--stage", default="all")
    p.add_argument("--delta", type=int, default=1)
    p.set_defaults(func=cmd_mapping)

    p = sub.add_parser("table-check", help="destinations per output port against the closed form")
    topo(p)
    p.add_argument("--delta", type=int, default=1)
    p.set_defaults(func=cmd_table_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TopologyError, RoutingError, FlowControlError, AuditError, OSError) as exc:
        print(f"ftsim {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
