"""Command-line driver: solve one task or a batch, write plans, reports and audit logs."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import signal
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .clock import Clock, VirtualClock, WallClock
from .orchestrator import GiB, ConstructionConfig, HeuristicBuilder
from .sas import SasError, SasTask, parse_sas_file
from .search import LIMIT, SOLVED, STATE_BYTES, UNSOLVABLE, astar_search, validate_plan, write_plan

log = logging.getLogger("cpcplan")

EXIT_SOLVED = 0
EXIT_ERROR = 1
EXIT_INPUT = 3
EXIT_UNSOLVABLE = 4
EXIT_LIMIT = 5
EXIT_INVALID_PLAN = 6
EXIT_INTERRUPTED = 130

CSV_COLUMNS = ["task", "domain", "coverage", "init_h", "expansions", "search_time", "total_time",
               "memory_kb"]


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int = EXIT_ERROR):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.code = code


def _num(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class RunReport:
    task: str
    domain: str = ""
    coverage: str = "failed"
    exit_code: int = EXIT_ERROR
    plan_cost: int | None = None
    plan_length: int | None = None
    init_h: Any = None
    expansions: int = 0
    evaluated: int = 0
    generated: int = 0
    search_time: float = 0.0
    construction_time: float = 0.0
    total_time: float = 0.0
    peak_memory_bytes: int = 0
    phases: dict = field(default_factory=dict)
    census: dict = field(default_factory=lambda: {"count": 0, "provenance": {}, "pdbs": 0,
                                                  "partial_pdbs": 0})
    bandits: dict = field(default_factory=dict)
    seed: int = 0
    clock: str = "wall"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps({k: _num(v) for k, v in asdict(self).items()}, sort_keys=True, indent=2) + "\n"


def write_report(report: RunReport, path: str | Path) -> None:
    try:
        Path(path).write_text(report.to_json())
    except OSError as e:
        raise StageError("report", f"cannot write {path}: {e}") from e


def write_batch_csv(reports: list[RunReport], path: str | Path) -> None:
    """One row per task, then one mean row per domain.

    A mean row reports the number of solved tasks as its coverage and
    averages the remaining columns over the solved tasks.
    """
    def row(r: RunReport):
        return [r.task, r.domain, r.coverage, _num(r.init_h), r.expansions, r.search_time,
                r.total_time, r.peak_memory_bytes // 1024]

    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(CSV_COLUMNS)
        for r in reports:
            out.writerow(row(r))
        for domain in sorted({r.domain for r in reports}):
            solved = [r for r in reports if r.domain == domain and r.coverage == SOLVED]
            n = len(solved)

            def mean(values):
                return sum(values) / n if n else ""

            out.writerow(["MEAN", domain, n, mean([r.init_h for r in solved]),
                          mean([r.expansions for r in solved]), mean([r.search_time for r in solved]),
                          mean([r.total_time for r in solved]),
                          mean([r.peak_memory_bytes // 1024 for r in solved])])


@dataclass
class RunOptions:
    seed: int = 0
    construction_time: float = 1080.0
    construction_memory: int = 4 * GiB
    overall_time: float = 1800.0
    overall_memory: int = 8 * GiB
    max_pdb_entries: int = 10**7
    max_stalled: int | None = None
    sample_states: int = 10_000
    virtual_clock: bool = False
    plan: str | None = None
    audit: str | None = None

    def construction_config(self) -> ConstructionConfig:
        return ConstructionConfig(
            seed=self.seed,
            construction_time=min(self.construction_time, self.overall_time),
            construction_memory=min(self.construction_memory, self.overall_memory),
            max_entries=self.max_pdb_entries,
            sample_states=self.sample_states,
            max_stalled_attempts=self.max_stalled,
        )


def _load(path: str | Path) -> SasTask:
    try:
        return parse_sas_file(path)
    except FileNotFoundError as e:
        raise StageError("parse", f"no such file: {path}", EXIT_INPUT) from e
    except OSError as e:
        raise StageError("parse", f"cannot read {path}: {e}", EXIT_INPUT) from e
    except SasError as e:
        raise StageError("parse", f"{path}: {e}", EXIT_INPUT) from e


def run_task(path: str | Path, opts: RunOptions, clock: Clock | None = None) -> tuple[RunReport, list[str] | None]:
    """Parse, construct the heuristic, search and validate. Never raises for task-level failures."""
    path = Path(path)
    clock = clock or (VirtualClock() if opts.virtual_clock else WallClock())
    report = RunReport(task=path.name, domain=path.parent.name, seed=opts.seed,
                       clock="virtual" if opts.virtual_clock else "wall")
    start = clock.now()
    plan = None
    builder = None
    try:
        task = _load(path)
        builder = HeuristicBuilder(task, opts.construction_config(), clock)
        try:
            result = builder.run()
        except KeyboardInterrupt:
            raise
        except Exception as e:
            raise StageError("construction", f"{type(e).__name__}: {e}") from e
        report.construction_time = clock.now() - start
        report.phases = dict(result.phase_times)
        report.census = result.census()
        report.bandits = {
            "algorithm": result.algorithm_bandit.to_dict(),
            "N": result.n_bandit.to_dict(),
            "S": result.s_bandit.to_dict() if result.s_bandit is not None else None,
        }
        if opts.audit:
            Path(opts.audit).write_text(result.audit.to_jsonl())

        spare = max(opts.overall_memory - result.peak_memory, 0)
        remaining = max(opts.overall_time - (clock.now() - start), 0.0)
        try:
            sr = astar_search(task, result.collections, clock, remaining, spare // STATE_BYTES)
        except KeyboardInterrupt:
            raise
        except Exception as e:
            raise StageError("search", f"{type(e).__name__}: {e}") from e
        report.init_h = sr.init_h
        report.expansions, report.evaluated, report.generated = sr.expansions, sr.evaluated, sr.generated
        report.search_time = sr.search_time
        report.phases["search"] = sr.search_time
        report.peak_memory_bytes = result.peak_memory + sr.peak_states * STATE_BYTES

        if sr.status == SOLVED:
            check = validate_plan(task, sr.plan)
            if not check.valid or check.cost != sr.cost:
                report.error = f"[validate] {check.reason or 'cost mismatch'}"
                report.exit_code = EXIT_INVALID_PLAN
            else:
                plan = sr.plan
                report.coverage, report.exit_code = SOLVED, EXIT_SOLVED
                report.plan_cost, report.plan_length = sr.cost, len(sr.plan)
                if opts.plan:
                    write_plan(opts.plan, sr.plan, sr.cost)
        elif sr.status == UNSOLVABLE:
            report.coverage, report.exit_code = UNSOLVABLE, EXIT_UNSOLVABLE
        else:
            assert sr.status == LIMIT
            report.exit_code = EXIT_LIMIT
            report.error = "[search] time or memory limit reached"
    except StageError as e:
        report.error, report.exit_code = str(e), e.code
    except KeyboardInterrupt:
        report.error, report.exit_code = "[abort] interrupted", EXIT_INTERRUPTED
        if builder is not None:
            report.census = _safe_census(builder)
    report.total_time = clock.now() - start
    return report, plan


def _safe_census(builder: HeuristicBuilder) -> dict:
    cset = builder.cset
    mix: dict[str, int] = {}
    for c in cset:
        mix[c.provenance] = mix.get(c.provenance, 0) + 1
    return {"count": len(cset), "provenance": dict(sorted(mix.items())),
            "pdbs": sum(len(c.pdbs) for c in cset),
            "partial_pdbs": sum(p.partial for c in cset for p in c.pdbs)}


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--construction-time", type=float, default=1080.0, metavar="SEC")
    p.add_argument("--construction-memory", type=int, default=4 * GiB, metavar="BYTES")
    p.add_argument("--overall-time", type=float, default=1800.0, metavar="SEC")
    p.add_argument("--overall-memory", type=int, default=8 * GiB, metavar="BYTES")
    p.add_argument("--max-pdb-entries", type=int, default=10**7, metavar="N")
    p.add_argument("--max-stalled", type=int, default=None, metavar="N",
                   help="stop the adaptive phase after N consecutive rejected attempts")
    p.add_argument("--sample-states", type=int, default=10_000, metavar="N")
    p.add_argument("--virtual-clock", action="store_true",
                   help="deterministic virtual time instead of wall-clock time")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpcplan", description="Optimal SAS+ planner with "
                                     "complementary pattern database heuristics.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one .sas task")
    solve.add_argument("task")
    _add_run_options(solve)
    solve.add_argument("--plan", metavar="PATH", help="write the plan in IPC format")
    solve.add_argument("--report", metavar="PATH", help="write a JSON run report")
    solve.add_argument("--audit", metavar="PATH", help="write the construction audit log (JSON lines)")

    batch = sub.add_parser("batch", help="solve several tasks and summarize them in a CSV file")
    batch.add_argument("tasks", nargs="+")
    _add_run_options(batch)
    batch.add_argument("--csv", required=True, metavar="PATH")
    batch.add_argument("--report-dir", metavar="DIR", help="also write one JSON report per task")
    return parser


def _options(args) -> RunOptions:
    return RunOptions(seed=args.seed, construction_time=args.construction_time,
                      construction_memory=args.construction_memory, overall_time=args.overall_time,
                      overall_memory=args.overall_memory, max_pdb_entries=args.max_pdb_entries,
                      max_stalled=args.max_stalled, sample_states=args.sample_states,
                      virtual_clock=args.virtual_clock, plan=getattr(args, "plan", None),
                      audit=getattr(args, "audit", None))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name, value in (("construction-time", args.construction_time), ("overall-time", args.overall_time)):
        if value < 0:
            print(f"error [args]: --{name} must be non-negative", file=sys.stderr)
            return EXIT_INPUT
    if min(args.construction_memory, args.overall_memory, args.max_pdb_entries, args.sample_states) <= 0:
        print("error [args]: memory, entry and sample limits must be positive", file=sys.stderr)
        return EXIT_INPUT
    previous = signal.signal(signal.SIGTERM, _raise_interrupt)
    try:
        opts = _options(args)
        if args.command == "solve":
            report, plan = run_task(args.task, opts)
            if report.error:
                print(f"error {report.error}", file=sys.stderr)
            if args.report:
                write_report(report, args.report)
            if plan is not None:
                print(f"solved: cost {report.plan_cost}, {report.plan_length} steps, "
                      f"{report.expansions} expansions, h(s0) = {_num(report.init_h)}")
            else:
                print(f"{report.coverage}")
            return report.exit_code

        reports = []
        for path in args.tasks:
            report, _ = run_task(path, opts)
            reports.append(report)
            print(f"{path}: {report.coverage}" + (f" (cost {report.plan_cost})" if report.plan_cost is not None else ""))
            if args.report_dir:
                out = Path(args.report_dir)
                out.mkdir(parents=True, exist_ok=True)
                write_report(report, out / f"{report.domain}__{Path(path).stem}.json")
            if report.exit_code == EXIT_INTERRUPTED:
                break
        write_batch_csv(reports, args.csv)
        return EXIT_INTERRUPTED if any(r.exit_code == EXIT_INTERRUPTED for r in reports) else EXIT_SOLVED
    except StageError as e:
        print(f"error {e}", file=sys.stderr)
        return e.code
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
