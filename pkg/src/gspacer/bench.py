"""Regression and comparison runner over a corpus of problem files.

Runs every problem under every requested rule configuration, records one CSV
row per run, and prints a per-configuration summary.  Per-run failures are
recorded, never fatal.  Verdicts must agree with the file's ``:status``
annotation and with each other across configurations.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import Engine, EngineConfig, Safe, Unknown, Unsafe
from .frontend import corpus_dir, load_problem

CSV_FIELDS = [
    "problem",
    "config",
    "verdict",
    "depth",
    "time_ms",
    "n_subsume",
    "n_concretize",
    "n_conjecture",
    "n_smt",
]

KNOWN_CONFIGS = ("all-on", "all-off", "no-subsume", "no-concretize", "no-conjecture")


@dataclass
class RunRecord:
    problem: str
    config: str
    verdict: str
    depth: int
    time_ms: int
    n_subsume: int
    n_concretize: int
    n_conjecture: int
    n_smt: int
    expected: Optional[str] = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


def config_named(name: str, timeout: Optional[float], max_frames: int) -> EngineConfig:
    if name not in KNOWN_CONFIGS:
        raise ValueError(f"unknown configuration {name!r} (known: {', '.join(KNOWN_CONFIGS)})")
    off = name == "all-off"
    return EngineConfig(
        timeout=timeout,
        max_frames=max_frames,
        enable_subsume=not (off or name == "no-subsume"),
        enable_concretize=not (off or name == "no-concretize"),
        enable_conjecture=not (off or name == "no-conjecture"),
    )


def run_one(path: Path, config_name: str, timeout: Optional[float], max_frames: int) -> RunRecord:
    problem = load_problem(str(path))
    engine = Engine(problem.system, config_named(config_name, timeout, max_frames))
    t0 = time.monotonic()
    try:
        result = engine.solve()
    except Exception as exc:  # recorded, never aborts the suite
        result = Unknown(f"crash: {exc}")
    finally:
        elapsed = int((time.monotonic() - t0) * 1000)
        engine.close()
    return RunRecord(
        problem=path.stem,
        config=config_name,
        verdict=result.status,
        depth=engine.stats["depth"],
        time_ms=elapsed,
        n_subsume=engine.stats["n_subsume"],
        n_concretize=engine.stats["n_concretize"],
        n_conjecture=engine.stats["n_conjecture"],
        n_smt=engine.stats["n_smt"],
        expected=problem.expected_status,
    )


def run_suite(
    corpus: Path,
    configs: list[str],
    timeout: Optional[float] = 60.0,
    max_frames: int = 200,
) -> tuple[list[RunRecord], list[str]]:
    """Cross-product execution; returns (records, consistency problems)."""
    problems = sorted(corpus.glob("*.smt"))
    records: list[RunRecord] = []
    issues: list[str] = []
    for path in problems:
        for config_name in configs:
            try:
                records.append(run_one(path, config_name, timeout, max_frames))
            except Exception as exc:
                issues.append(f"{path.stem}/{config_name}: {exc}")
    by_problem: dict[str, list[RunRecord]] = {}
    for r in records:
        by_problem.setdefault(r.problem, []).append(r)
    for name, runs in sorted(by_problem.items()):
        verdicts = {r.verdict for r in runs if r.verdict != "unknown"}
        if len(verdicts) > 1:
            issues.append(f"{name}: contradictory verdicts {sorted(verdicts)}")
        for r in runs:
            if r.expected and r.verdict not in ("unknown", r.expected):
                issues.append(
                    f"{name}/{r.config}: verdict {r.verdict} != expected {r.expected}"
                )
    return records, issues


def summarize(records: list[RunRecord]) -> str:
    lines = []
    configs = sorted({r.config for r in records})
    for config_name in configs:
        runs = [r for r in records if r.config == config_name]
        solved = [r for r in runs if r.verdict in ("safe", "unsafe")]
        lines.append(
            f"{config_name}: solved {len(solved)}/{len(runs)}"
            f" (safe {sum(1 for r in solved if r.verdict == 'safe')},"
            f" unsafe {sum(1 for r in solved if r.verdict == 'unsafe')})"
        )
    return "\n".join(lines)


def depth_trend_violations(records: list[RunRecord]) -> list[str]:
    """Problems solved by both all-on and all-off where guidance converged
    deeper; the bundled corpus is expected to have none."""
    out = []
    by_problem: dict[str, dict[str, RunRecord]] = {}
    for r in records:
        by_problem.setdefault(r.problem, {})[r.config] = r
    for name, runs in sorted(by_problem.items()):
        on, off = runs.get("all-on"), runs.get("all-off")
        if on and off and on.verdict == "safe" and off.verdict == "safe":
            if on.depth > off.depth:
                out.append(f"{name}: depth {on.depth} (all-on) > {off.depth} (all-off)")
    return out


def write_csv(records: list[RunRecord], out_path: Path) -> None:
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="gspacer-bench")
    ap.add_argument("--corpus", default=None, help="directory of .smt problems (default: bundled)")
    ap.add_argument("--configs", default="all-on,all-off",
                    help=f"comma-separated subset of {','.join(KNOWN_CONFIGS)}")
    ap.add_argument("--timeout", type=float, default=60.0, help="per-run seconds")
    ap.add_argument("--max-frames", type=int, default=200)
    ap.add_argument("--out", default="results.csv")
    ap.add_argument("--check-trends", action="store_true",
                    help="fail when all-on converges deeper than all-off")
    args = ap.parse_args(argv)
    corpus = Path(args.corpus) if args.corpus else Path(str(corpus_dir()))
    configs = [c.strip() for c in args.configs.split(",") if c.strip()]
    for c in configs:
        if c not in KNOWN_CONFIGS:
            print(f"error: unknown configuration {c!r}", file=sys.stderr)
            return 2
    records, issues = run_suite(corpus, configs, args.timeout, args.max_frames)
    write_csv(records, Path(args.out))
    print(summarize(records))
    for issue in issues:
        print(f"CONSISTENCY: {issue}", file=sys.stderr)
    trend = depth_trend_violations(records)
    if args.check_trends:
        for t in trend:
            print(f"TREND: {t}", file=sys.stderr)
    print(f"wrote {args.out} ({len(records)} runs)")
    if issues or (args.check_trends and trend):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
