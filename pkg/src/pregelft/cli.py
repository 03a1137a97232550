"""Command-line job runner.

Exit codes: 0 success (and oracle agreement with ``--oracle``), 1 divergence
from the oracle, 2 usage error, 3 scenario or runtime error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .errors import ConfigError, PregelError
from .harness import GenSpec, RunConfig, emit, run_with_oracle, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pregelft", description=__doc__.splitlines()[0])
    p.add_argument("--strategy", choices=["hwcp", "lwcp", "hwlog", "lwlog"], default="hwcp")
    p.add_argument("--algo", choices=["pagerank", "hashmin", "triangle", "reqres", "kcore"],
                   default="pagerank")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="graph file: <id> TAB <neighbor> <neighbor> ...")
    src.add_argument("--gen", help='seeded generator, e.g. "v=1000,e=10000,seed=1"')
    p.add_argument("--workers", type=int, default=4)
    cp = p.add_mutually_exclusive_group()
    cp.add_argument("--cp-every", type=int, help="checkpoint every N supersteps (default 10)")
    cp.add_argument("--cp-every-secs", type=float, help="checkpoint every N seconds")
    p.add_argument("--scenario", help="failure scenario file")
    p.add_argument("--mode", choices=["deterministic", "concurrent"], default="deterministic")
    p.add_argument("--damping", type=float, help="PageRank damping factor (0.85)")
    p.add_argument("--tri-c", type=int, help="triangle request budget C (1)")
    p.add_argument("--supersteps", type=int, help="PageRank superstep budget / reqres rounds")
    p.add_argument("--out", help="write final vertex values here")
    p.add_argument("--oracle", action="store_true",
                   help="also run the failure-free twin and compare final values")
    p.add_argument("--format", choices=["human", "machine"], default="human",
                   help="metrics output format")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    params: dict = {}
    if args.damping is not None:
        if args.algo != "pagerank":
            raise ConfigError("--damping only applies to pagerank")
        params["damping"] = args.damping
    if args.tri_c is not None:
        if args.algo != "triangle":
            raise ConfigError("--tri-c only applies to triangle")
        params["c"] = args.tri_c
    if args.supersteps is not None:
        if args.algo == "pagerank":
            params["max_supersteps"] = args.supersteps
        elif args.algo == "reqres":
            params["rounds"] = args.supersteps
        else:
            raise ConfigError("--supersteps only applies to pagerank and reqres")
    cp_every = args.cp_every
    if cp_every is None and args.cp_every_secs is None:
        cp_every = 10
    return RunConfig(
        strategy=args.strategy,
        algorithm=args.algo,
        params=params,
        graph=args.graph,
        gen=GenSpec.parse(args.gen) if args.gen else None,
        workers=args.workers,
        cp_every=cp_every,
        cp_every_secs=args.cp_every_secs,
        scenario=args.scenario,
        mode=args.mode,
        out=args.out,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        config.validate()
        if args.oracle:
            outcome, _, eq = run_with_oracle(config)
        else:
            outcome, eq = run(config), None
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"pregelft: error: {exc}", file=sys.stderr)
        return 2
    except (PregelError, OSError) as exc:
        print(f"pregelft: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(emit(outcome.report, args.format))
    if eq is not None:
        print(f"oracle: {eq.describe()}", file=sys.stderr)
        if not eq.ok:
            return 1
    return 0
