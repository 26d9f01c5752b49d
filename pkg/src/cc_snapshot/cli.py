"""Command-line entry point.

Exit codes: 0 safe snapshot or clean completion, 1 invariant violation,
2 deadlock, 3 unsupported feature, 4 usage error, 5 bounded/partial result.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import statistics
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .oracle import Bounds, explore_interleavings, required_checks
from .sim import (
    DeadlockError,
    ErroneousProgramError,
    ProtocolInvariantError,
    RunawayError,
    SimConfig,
    UnsupportedFeatureError,
    run,
    write_event_log,
)
from .workload import Workload, WorkloadParseError, parse_workload, validate_correctness

EXIT_OK, EXIT_VIOLATION, EXIT_DEADLOCK, EXIT_UNSUPPORTED, EXIT_USAGE, EXIT_BOUNDED = 0, 1, 2, 3, 4, 5

log = logging.getLogger("cc_snapshot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def shipped_workloads() -> List[str]:
    root = resources.files("cc_snapshot") / "workloads"
    return sorted(p.name[: -len(".workload")] for p in root.iterdir() if p.name.endswith(".workload"))


def resolve_workload(spec: str) -> Workload:
    """Load a workload from a path, or by name from the shipped set."""
    path = Path(spec)
    if path.is_file():
        return parse_workload(path.read_text(), name=path.stem)
    res = resources.files("cc_snapshot") / "workloads" / f"{spec}.workload"
    if res.is_file():
        return parse_workload(res.read_text(), name=spec)
    raise UsageError(f"no such workload file or shipped workload: {spec}")


def _request_time(arg: Optional[str], workload: Workload, config: SimConfig) -> Optional[int]:
    if arg is None or arg == "none":
        return None
    if arg == "random":
        try:
            ticks = run(config, workload, "none").metrics.ticks
        except (DeadlockError, RunawayError) as exc:
            ticks = exc.result.metrics.ticks
        return random.Random(config.scheduler_seed).randint(0, ticks)
    try:
        value = int(arg)
    except ValueError:
        raise UsageError(f"--request-at expects a step, 'random' or 'none', got {arg!r}") from None
    if value < 0:
        raise UsageError("--request-at must be >= 0")
    return value


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_records(path: Path, records: Sequence[Dict[str, Any]]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _targets_record(targets) -> Optional[Dict[str, int]]:
    if targets is None:
        return None
    return {str(g): v for g, v in sorted(targets.items())}


def execute(workload: Workload, protocol: str, seed: int, policy: str, request_at: Optional[int]) -> Dict[str, Any]:
    """One run summarised as a plain record with an exit code."""
    config = SimConfig(workload.world_size, seed, progress_policy=policy)
    rec: Dict[str, Any] = {"workload": workload.name, "protocol": protocol, "seed": seed, "policy": policy,
                           "request_at": request_at}
    result = None
    try:
        result = run(config, workload, protocol, request_at)
        rec["status"] = result.status
        rec["exit"] = EXIT_OK
        if result.verdict is not None:
            rec["verdict"] = result.verdict.to_record()
            if result.verdict.failures(required_checks(protocol)):
                rec["exit"] = EXIT_VIOLATION
    except UnsupportedFeatureError as exc:
        rec.update(status="unsupported", error=str(exc), exit=EXIT_UNSUPPORTED)
    except DeadlockError as exc:
        result = exc.result
        rec.update(status="deadlock", error=str(exc), deadlock=exc.report.to_record(), exit=EXIT_DEADLOCK)
    except RunawayError as exc:
        result = exc.result
        rec.update(status="runaway", error=str(exc), exit=EXIT_BOUNDED)
    except (ProtocolInvariantError, ErroneousProgramError) as exc:
        rec.update(status="violation", error=f"{type(exc).__name__}: {exc}", exit=EXIT_VIOLATION)
    if result is not None:
        rec["metrics"] = result.metrics.to_record()
        rec["initial_targets"] = _targets_record(result.initial_targets)
        rec["_events"] = result.events
    return rec


def cmd_run(args) -> int:
    workload = resolve_workload(args.workload)
    config = SimConfig(workload.world_size, args.seed, progress_policy=args.progress)
    request_at = _request_time(args.request_at, workload, config)
    rec = execute(workload, args.protocol, args.seed, config.progress_policy.value, request_at)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events = rec.pop("_events", [])
    write_event_log(events, out / "events.log")
    _write_records(out / "metrics.jsonl", [rec["metrics"]] if "metrics" in rec else [])
    _write_json(out / "verdict.json", rec)
    print(f"{workload.name}: protocol={args.protocol} status={rec['status']} exit={rec['exit']}")
    if rec.get("initial_targets") is not None:
        print("initial targets: " + ", ".join(f"{g}:{v}" for g, v in rec["initial_targets"].items()))
    if "verdict" in rec:
        print("verdict: " + ", ".join(
            f"{n}={'skip' if c['skipped'] else ('pass' if c['passed'] else 'FAIL')}" for n, c in rec["verdict"]["checks"].items()
        ))
    if "error" in rec:
        print(rec["error"])
    return rec["exit"]


COMPARE_FIELDS = ("protocol_messages_before_request", "protocol_messages_after_request", "extra_sync_events",
                  "steps_to_quiesce", "drain_iterations")


def cmd_compare(args) -> int:
    workload = resolve_workload(args.workload)
    seeds = list(range(args.seed, args.seed + args.seeds))
    records: List[Dict[str, Any]] = []
    for seed in seeds:
        config = SimConfig(workload.world_size, seed, progress_policy=args.progress)
        native = run(config, workload, "none")
        n = args.sweep
        times = sorted({round(i * native.metrics.ticks / max(n - 1, 1)) for i in range(n)}) if n > 0 else []
        for t in times:
            for protocol in ("cc", "2pc"):
                rec = execute(workload, protocol, seed, config.progress_policy.value, t)
                rec.pop("_events", None)
                records.append(rec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_records(out / "metrics.jsonl", records)
    table = compare_table(records)
    _write_json(out / "compare.json", table)
    print(format_table(table))
    return EXIT_VIOLATION if any(r["exit"] == EXIT_VIOLATION for r in records) else EXIT_OK


def compare_table(records: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    table: Dict[str, Any] = {}
    for protocol in ("cc", "2pc"):
        runs = [r for r in records if r["protocol"] == protocol]
        if not runs:
            continue
        row: Dict[str, Any] = {"runs": len(runs), "annotations": sorted({r["status"] for r in runs if r["exit"] != 0})}
        for f in COMPARE_FIELDS:
            vals = [r["metrics"][f] for r in runs if "metrics" in r and r["metrics"][f] is not None]
            if vals:
                row[f] = {"mean": statistics.fmean(vals), "min": min(vals), "max": max(vals)}
        table[protocol] = row
    return table


def format_table(table: Dict[str, Any]) -> str:
    if not table:
        return "(empty sweep)"
    lines = [f"{'metric':36} " + " ".join(f"{p:>22}" for p in table)]
    for f in ("runs",) + COMPARE_FIELDS:
        cells = []
        for row in table.values():
            v = row.get(f)
            if isinstance(v, dict):
                cells.append(f"{v['mean']:.1f} [{v['min']}..{v['max']}]")
            else:
                cells.append("-" if v is None else str(v))
        lines.append(f"{f:36} " + " ".join(f"{c:>22}" for c in cells))
    notes = {p: row["annotations"] for p, row in table.items() if row["annotations"]}
    if notes:
        lines.append("annotations: " + "; ".join(f"{p}: {', '.join(a)}" for p, a in notes.items()))
    return "\n".join(lines)


def cmd_verify(args) -> int:
    workload = resolve_workload(args.workload)
    bounds = Bounds(max_states=args.verify_bounds, max_instructions=args.max_instructions)
    policies = [args.progress] if args.progress else ["eager", "lazy", "randomized"]
    report = validate_correctness(workload, exhaustive=False)
    verdicts = []
    try:
        for policy in policies:
            verdicts.append(explore_interleavings(workload, args.protocol, "all", policy, bounds))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = {"workload": workload.name, "validator": {"verdict": report.verdict, "reasons": report.reasons,
                                                     "warnings": report.warnings},
            "explorations": [v.to_record() for v in verdicts]}
    _write_json(out / "verdict.json", data)
    print(f"validator: {report.verdict}" + "".join(f"\n  {r}" for r in report.reasons))
    for v in verdicts:
        print(v.summary())
        for w in v.deadlocks[:1] + v.violations[:1] + v.error_witnesses[:1]:
            print("  " + w.describe())
    if any(v.violation_count or v.cycles for v in verdicts):
        return EXIT_VIOLATION
    if any(v.error_count and any(w.message.startswith("unsupported") for w in v.error_witnesses) for v in verdicts):
        return EXIT_UNSUPPORTED
    if any(v.error_count for v in verdicts):
        return EXIT_VIOLATION
    if any(v.deadlock_count for v in verdicts):
        return EXIT_DEADLOCK
    if any(v.bounded for v in verdicts):
        return EXIT_BOUNDED
    return EXIT_OK


def cmd_workloads(args) -> int:
    for name in shipped_workloads():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cc-snapshot", description="Simulate and verify checkpoint coordination protocols.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, protocol=True):
        p.add_argument("--workload", required=True, help="workload file or shipped workload name")
        if protocol:
            p.add_argument("--protocol", choices=["cc", "2pc", "none"], default="cc")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("run", help="run one workload")
    common(p)
    p.add_argument("--request-at", default=None, help="scheduler step, 'random' or 'none'")
    p.add_argument("--progress", choices=["eager", "lazy", "random"], default="eager")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare cc and 2pc over seeds and request times")
    common(p, protocol=False)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds starting at --seed")
    p.add_argument("--sweep", type=int, default=5, help="number of request instants per seed")
    p.add_argument("--progress", choices=["eager", "lazy", "random"], default="eager")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="explore all interleavings of a small workload")
    common(p)
    p.add_argument("--verify-bounds", type=int, default=Bounds().max_states, help="maximum explored states")
    p.add_argument("--max-instructions", type=int, default=Bounds().max_instructions)
    p.add_argument("--progress", choices=["eager", "lazy", "random"], default=None,
                   help="one progress policy (default: all three)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("workloads", help="list shipped workloads")
    p.set_defaults(func=cmd_workloads)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("CC_SNAPSHOT_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, WorkloadParseError) as exc:
        print(f"cc-snapshot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedFeatureError as exc:
        print(f"cc-snapshot: unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())
