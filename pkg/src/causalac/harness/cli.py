"""Command line entry point: ``causalac <command> [options]``.

Every command writes JSON lines (to ``--out`` or stdout).  ``bench`` also
renders a throughput plot next to ``--out``.  The exit status is 1 when an
invariant is violated or data leaks in causal mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..stats.workload import WorkloadConfig, dump_jsonl, generate_workload
from ..store import CAUSAL, EVENTUAL
from . import bench, modelcheck, scenarios

log = logging.getLogger("causalac")


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _emit(lines: list[str], out: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _consistency(mode: str) -> str:
    return EVENTUAL if mode in (EVENTUAL, "eventual-mode") else CAUSAL


def cmd_bench(args) -> int:
    workload = WorkloadConfig.from_scale(args.scale, seed=args.seed)
    ops = generate_workload(workload)
    modes = bench.MODES if args.mode == "all" else [args.mode]
    records = []
    for mode in modes:
        for delay in args.net_delay_ms:
            cfg = bench.ScenarioConfig(
                mode=mode,
                net_delay_ms=delay,
                base_delay_ms=args.base_delay_ms,
                workload=workload,
                seed=args.seed,
            )
            metrics = bench.run_benchmark(cfg, ops)
            log.info("%s net=%sms: %.1f ops/s", cfg.mode, delay, metrics.throughput_ops_per_s)
            records.append(bench.bench_record(cfg, metrics))
    _emit([_dumps(r) for r in records], args.out)
    if args.out and not args.no_figure:
        from .figures import figure_path, plot_throughput

        log.info("figure written to %s", plot_throughput(records, figure_path(args.out)))
    return 1 if any(r["leaks_detected"] for r in records) else 0


def cmd_alicebob(args) -> int:
    mode = _consistency(args.mode)
    report = scenarios.run_alice_bob(mode, args.schedules, args.seed)
    _emit([_dumps({"kind": "alicebob", **report.as_dict()})], args.out)
    return 1 if mode == CAUSAL and report.leaks else 0


def cmd_charly(args) -> int:
    report = scenarios.run_charly(args.seed, _consistency(args.mode))
    _emit([_dumps({"kind": "charly", **report.as_dict()})], args.out)
    return 1 if report.both_granted_states or not report.agree else 0


def cmd_modelcheck(args) -> int:
    mode = _consistency(args.mode)
    verdict = modelcheck.model_check_protection(
        args.history_size, args.replicas, mode, max_shapes=args.schedules, seed=args.seed
    )
    log.info("model check took %.1fs over %d states", verdict.elapsed_s, verdict.states)
    _emit([_dumps(verdict.as_dict())], args.out)
    return 1 if mode == CAUSAL and not verdict.ok else 0


def cmd_workload(args) -> int:
    ops = generate_workload(WorkloadConfig.from_scale(args.scale, seed=args.seed))
    text = dump_jsonl(ops)
    _emit(text.splitlines(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalac", description="Access control on a causally consistent CRDT store."
    )
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        return sub.add_parser(name, help=help, parents=[verbose])

    def common(p, mode_default, modes):
        p.add_argument("--mode", default=mode_default, choices=modes)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="JSONL output file (default: stdout)")

    p = command("bench", "simulated STATS throughput per deployment")
    common(p, "all", ["all", *bench.MODES, *bench.MODE_ALIASES])
    p.add_argument("--net-delay-ms", type=float, nargs="+", default=[0.0, 10.0, 50.0, 100.0])
    p.add_argument("--base-delay-ms", type=float, default=bench.DEFAULT_BASE_DELAY_MS)
    p.add_argument("--scale", type=int, default=1000, help="approximate workload size in operations")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG next to --out")
    p.set_defaults(func=cmd_bench)

    consistency = [CAUSAL, EVENTUAL, "eventual-mode"]
    p = command("alicebob", "revocation followed by an upload")
    common(p, CAUSAL, consistency)
    p.add_argument("--schedules", type=int, default=None, help="sample this many delivery orders")
    p.set_defaults(func=cmd_alicebob)

    p = command("charly", "concurrent conflicting grants")
    common(p, CAUSAL, consistency)
    p.set_defaults(func=cmd_charly)

    p = command("modelcheck", "exhaustive protection relation check")
    common(p, CAUSAL, consistency)
    p.add_argument("--history-size", type=int, default=modelcheck.MAX_HISTORY)
    p.add_argument("--replicas", type=int, default=modelcheck.MAX_REPLICAS)
    p.add_argument("--schedules", type=int, default=None, help="sample this many history shapes")
    p.set_defaults(func=cmd_modelcheck)

    p = command("workload", "print the synthetic STATS workload")
    p.add_argument("--scale", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_workload)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"causalac: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
