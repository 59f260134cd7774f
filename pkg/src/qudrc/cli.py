"""Command line entry point.

Subcommands::

    qudrc solve --config FILE [--delta D ...] [--seed S] [--out DIR] ...
    qudrc gen-graph --nodes N --extra-edge-prob P --seed S --out FILE
    qudrc check --config FILE

Exit status: 0 on success, 1 if a run failed, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import ConfigError, RejectedGraph
from .experiment import ExperimentConfig, load_config, run_checks, run_experiment
from .graph import random_strongly_connected_digraph, write_graph

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("qudrc")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser):
    parser.add_argument("--config", help="key = value config file")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "deltas":
            parser.add_argument("--delta", dest="deltas", action="append",
                                help="quantization level; repeat for a sweep")
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None)


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name == "deltas":
            overrides.append(f"deltas = {', '.join(value)}")
        else:
            overrides.append(f"{f.name} = {value}")
    if overrides:
        from .experiment import parse_config_text
        cfg = parse_config_text("\n".join(overrides), base=cfg)
    return cfg.validate()


def _cmd_solve(args) -> int:
    cfg = _resolve_config(args)
    result = run_experiment(cfg)
    for row in result.summary:
        print(f"{row['run']:>24}  iterations={row['iterations']:<4d} plateau_error={row['plateau_error']:.3e}"
              f"  fqac_rounds={row['fqac_rounds_total']}")
    print(f"wrote results to {cfg.out}")
    return EXIT_RUN_FAILED if result.failures else EXIT_OK


def _cmd_gen_graph(args) -> int:
    try:
        graph = random_strongly_connected_digraph(args.nodes, args.extra_edge_prob, args.seed)
    except (ValueError, RejectedGraph) as exc:
        raise ConfigError(str(exc)) from None
    write_graph(graph, args.out)
    print(f"{graph.node_count} nodes, {len(graph.edges)} edges, diameter {graph.diameter} -> {args.out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = _resolve_config(args)
    results = run_checks(cfg, iterations=args.iterations)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_RUN_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="qudrc", description="Quantized decentralized consensus optimization over digraphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    solve = sub.add_parser("solve", help="run the quantization-level sweep and write CSVs")
    _add_config_flags(solve)
    solve.set_defaults(func=_cmd_solve)

    gen = sub.add_parser("gen-graph", help="write a random strongly connected digraph")
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--extra-edge-prob", type=float, default=0.2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_graph)

    check = sub.add_parser("check", help="short run with invariant checks")
    _add_config_flags(check)
    check.add_argument("--iterations", type=int, default=20)
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RejectedGraph) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
