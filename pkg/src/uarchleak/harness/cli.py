"""Command-line interface.

Verbs: dump, toy, kaslr-search, matrix, bench. Global flags select a config
file, master seed, raw memory images to plant, and the report output path.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 a scenario
assertion failed (for example, a leak occurred under a countermeasure).
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, defaults, parse_file, set_key
from .scenario import Scenario, ScenarioError, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_ASSERTION = 3


def _parse_load(spec: str) -> tuple[str, int]:
    path, sep, addr = spec.rpartition("@")
    if not sep:
        raise ConfigError(f"--load expects FILE@PADDR, got {spec!r}")
    try:
        return path, int(addr, 0)
    except ValueError:
        raise ConfigError(f"bad --load physical address {addr!r}") from None


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Global flags, usable before or after the verb.

    The per-verb copy uses SUPPRESS defaults so an unspecified flag after the
    verb does not clobber a value given before it.
    """
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="scenario config file (flat key=value)")
    p.add_argument(
        "--seed", type=lambda s: int(s, 0), default=d, help="master seed override"
    )
    p.add_argument(
        "--load",
        action="append",
        default=argparse.SUPPRESS if suppress else [],
        metavar="FILE@PADDR",
        help="plant a raw binary file at a physical address (repeatable)",
    )
    p.add_argument("--out", default=d, help="write the report here (atomic)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=False)
    per_verb = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="uarchleak",
        parents=[common],
        description="Out-of-order core simulator with a transient-execution "
        "memory-disclosure attack and its countermeasures.",
    )

    sub = parser.add_subparsers(dest="verb", required=True)

    p_dump = sub.add_parser(
        "dump", parents=[per_verb], help="leak a memory range and hexdump it"
    )
    p_dump.add_argument("--start", help="virtual start address, or 'auto' (planted data)")
    p_dump.add_argument("--length", type=lambda s: int(s, 0))
    p_dump.add_argument("--mode", choices=["handling", "suppression"])
    p_dump.add_argument("--bits", type=int, choices=[1, 8], dest="bits")

    p_toy = sub.add_parser(
        "toy", parents=[per_verb], help="trap-then-access demo; emits the latency sweep"
    )
    p_toy.add_argument("--data", type=lambda s: int(s, 0))

    sub.add_parser(
        "kaslr-search", parents=[per_verb], help="locate the randomized direct-map base"
    )

    p_matrix = sub.add_parser(
        "matrix", parents=[per_verb], help="attack under each countermeasure"
    )
    p_matrix.add_argument("--length", type=lambda s: int(s, 0))

    p_bench = sub.add_parser(
        "bench", parents=[per_verb], help="cycles/byte: handling vs suppression"
    )
    p_bench.add_argument("--length", type=lambda s: int(s, 0))

    return parser


def _scenario_from_args(args: argparse.Namespace) -> Scenario:
    cfg = defaults()
    if args.config:
        cfg = parse_file(args.config, cfg)
    if args.seed is not None:
        set_key(cfg, "seed", args.seed)
    set_key(cfg, "experiment", args.verb)

    if args.verb == "dump":
        if args.start is not None:
            set_key(cfg, "dump.start", args.start)
        if args.length is not None:
            set_key(cfg, "dump.length", args.length)
        if args.mode is not None:
            set_key(cfg, "attack.mode", args.mode)
        if args.bits is not None:
            set_key(cfg, "attack.bits_per_tx", args.bits)
    elif args.verb == "toy":
        if args.data is not None:
            set_key(cfg, "toy.data", args.data)
    elif args.verb in ("matrix", "bench"):
        if args.length is not None:
            set_key(cfg, "dump.length", args.length)

    loads = [_parse_load(spec) for spec in args.load]
    return Scenario(cfg=cfg, loads=loads)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = _scenario_from_args(args)
        report = run_scenario(scenario, out_path=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, IOError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION

    text = report.render()
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"report written to {args.out}")
    return EXIT_ASSERTION if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
