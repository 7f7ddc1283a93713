"""Command-line entry point: ``kadconn simulate | analyze | matrix``.

Exit codes:

====  ==========================================================
0     success
1     ``matrix`` finished but at least one combination failed
2     usage or configuration error
3     I/O error (unreadable input, unwritable output)
4     malformed snapshot file
5     ``--oracle`` found a disagreement with brute force
====  ==========================================================

Diagnostics go to stderr, one per line, as ``kadconn: <category>: <detail>``
where category is one of ``usage``, ``config``, ``io``, ``format``, ``oracle``
or, for combinations that ``matrix`` could not complete, ``failed``.
"""

from __future__ import annotations

import argparse
import csv
import glob as globlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import snapshot as snapfile
from ._io import atomic_write_text
from .analysis import (
    DEFAULT_MIN_SOURCES,
    DEFAULT_SAMPLE_FRACTION,
    ConnectivityReport,
    ReportRow,
    analyze_snapshot,
    export_report_csv,
    format_decimal,
    snapshot_to_graph,
)
from .config import ConfigError, load_matrix, load_scenario
from .flowgraph import brute_force_vertex_connectivity, even_transform, vertex_connectivity_pair
from .simulator import ScenarioConfig, parse_scenario_tag, run_passes
from .snapshot import Snapshot, SnapshotFormatError

__all__ = [
    "EXIT_OK",
    "EXIT_PARTIAL",
    "EXIT_USAGE",
    "EXIT_IO",
    "EXIT_FORMAT",
    "EXIT_ORACLE",
    "CliError",
    "RunManifest",
    "MatrixSummary",
    "cmd_simulate",
    "cmd_analyze",
    "cmd_matrix",
    "snapshot_filename",
    "main",
]

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_ORACLE = 0, 1, 2, 3, 4, 5
ORACLE_MAX_VERTICES = 12


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category

    def __reduce__(self):
        return type(self), (self.code, self.category, str(self))


@dataclass
class RunManifest:
    config: ScenarioConfig
    output_dir: Path
    produced_files: list[Path] = field(default_factory=list)
    wall_time: float = 0.0
    join_failures: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["churn"] = self.config.churn.label
        cfg["churn_cycle_minutes"] = self.config.churn.cycle_minutes
        params = cfg.pop("params")
        cfg.update(params)
        doc = {
            "tag": self.config.tag,
            "config": cfg,
            "output_dir": str(self.output_dir),
            "produced_files": [p.name for p in self.produced_files],
            "wall_time": round(self.wall_time, 3),
            "join_failures": self.join_failures,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def snapshot_filename(tag: str, snap: Snapshot) -> str:
    return f"{tag}_pass{snap.pass_index}_t{format_decimal(Fraction(snap.time, 60000))}.snap"


def _tag_from_filename(path: Path) -> str:
    stem = path.name.removesuffix(".snap")
    tag, sep, _ = stem.rpartition("_pass")
    return tag if sep else stem


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: cannot create directory: {exc.strerror or exc}") from None


def _write(path: Path, text: str) -> None:
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: cannot write: {exc.strerror or exc}") from None


def _load_config(path: str | os.PathLike) -> ScenarioConfig:
    try:
        return load_scenario(path)
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: cannot read: {exc.strerror or exc}") from None


def _override(config: ScenarioConfig, seed: int | None, passes: int | None) -> ScenarioConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if passes is not None:
        if passes < 1:
            raise CliError(EXIT_USAGE, "usage", f"--passes must be >= 1, got {passes}")
        changes["passes"] = passes
    return replace(config, **changes) if changes else config


def run_scenario(config: ScenarioConfig, output_dir: Path, jobs: int = 1) -> RunManifest:
    """Simulate every pass and write snapshot files plus ``manifest.json``."""
    _ensure_dir(output_dir)
    start = time.perf_counter()
    results = run_passes(config, jobs=jobs)
    manifest = RunManifest(config, output_dir)
    for result in results:
        manifest.join_failures.append(result.join_failures)
        for snap in result.snapshots:
            path = output_dir / snapshot_filename(config.tag, snap)
            _write(path, snapfile.dumps(snap))
            manifest.produced_files.append(path)
    manifest.wall_time = time.perf_counter() - start
    _write(output_dir / "manifest.json", manifest.to_json())
    return manifest


def cmd_simulate(
    config_file: str | os.PathLike,
    output_dir: str | os.PathLike,
    *,
    seed: int | None = None,
    passes: int | None = None,
    jobs: int = 1,
) -> RunManifest:
    config = _override(_load_config(config_file), seed, passes)
    return run_scenario(config, Path(output_dir), jobs)


def _check_fraction(c: float, min_sources: int) -> None:
    if not 0 < c <= 1:
        raise CliError(EXIT_USAGE, "usage", f"--sample-fraction must lie in (0, 1], got {c}")
    if min_sources < 1:
        raise CliError(EXIT_USAGE, "usage", f"--min-sources must be >= 1, got {min_sources}")


def _read_snapshot(path: Path) -> Snapshot:
    try:
        return snapfile.read(path)
    except SnapshotFormatError as exc:
        raise CliError(EXIT_FORMAT, "format", f"{path}: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: cannot read: {exc.strerror or exc}") from None


def _oracle_check(snap: Snapshot, row: ReportRow) -> str | None:
    """Compare every pair against brute force on small graphs; describe any mismatch."""
    g, ids = snapshot_to_graph(snap)
    if g.n > ORACLE_MAX_VERTICES or g.n < 2:
        return None
    net = even_transform(g)
    best = None
    for v in range(g.n):
        for w in range(g.n):
            if v == w or g.has_edge(v, w):
                continue
            fast = vertex_connectivity_pair(g, v, w, net)
            slow = brute_force_vertex_connectivity(g, v, w)
            if fast != slow:
                return f"pair ({ids[v]:x}, {ids[w]:x}): max-flow {fast}, brute force {slow}"
            best = slow if best is None else min(best, slow)
    if best is None:
        best = g.n - 1
    if row.sample_fraction == 1 and row.kappa_min != best:
        return f"kappa_min {row.kappa_min}, brute force {best}"
    if row.kappa_min is not None and row.kappa_min < best:
        return f"sampled kappa_min {row.kappa_min} below the true minimum {best}"
    return None


def _analyze_one(args: tuple[Path, float, int, bool]) -> tuple[ReportRow, str | None]:
    path, c, min_sources, oracle = args
    snap = _read_snapshot(path)
    tags = parse_scenario_tag(_tag_from_filename(path))
    if not tags["k"]:
        tags["k"] = str(snap.k)
    row = analyze_snapshot(snap, c, min_sources=min_sources, tags=tags)
    mismatch = _oracle_check(snap, row) if oracle else None
    return row, (f"{path}: {mismatch}" if mismatch else None)


def analyze_files(
    paths: list[Path], c: float, *, min_sources: int, oracle: bool = False, jobs: int = 1
) -> tuple[ConnectivityReport, list[str]]:
    work = [(p, c, min_sources, oracle) for p in paths]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_one, work))
    else:
        results = [_analyze_one(w) for w in work]
    report = ConnectivityReport()
    report.extend(row for row, _ in results)
    return report, [m for _, m in results if m]


def cmd_analyze(
    snapshot_glob: str,
    output_csv: str | os.PathLike,
    *,
    c: float = DEFAULT_SAMPLE_FRACTION,
    min_sources: int = DEFAULT_MIN_SOURCES,
    oracle: bool = False,
    jobs: int = 1,
) -> ConnectivityReport:
    _check_fraction(c, min_sources)
    paths = sorted(Path(p) for p in globlib.glob(snapshot_glob))
    if not paths:
        raise CliError(EXIT_USAGE, "usage", f"no snapshot files match {snapshot_glob!r}")
    report, mismatches = analyze_files(paths, c, min_sources=min_sources, oracle=oracle, jobs=jobs)
    _write(Path(output_csv), export_report_csv(report))
    if mismatches:
        raise CliError(EXIT_ORACLE, "oracle", "; ".join(mismatches))
    return report


@dataclass
class MatrixSummary:
    completed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.completed) + len(self.skipped) + len(self.failed)


_INDEX_HEADER = ["tag", "network_size", "setup", "churn", "traffic", "k", "status", "csv"]


def cmd_matrix(
    matrix_file: str | os.PathLike,
    output_dir: str | os.PathLike,
    *,
    seed: int | None = None,
    passes: int | None = None,
    c: float = DEFAULT_SAMPLE_FRACTION,
    min_sources: int = DEFAULT_MIN_SOURCES,
    oracle: bool = False,
    jobs: int = 1,
    log=None,
) -> MatrixSummary:
    """Run every combination that has no CSV yet; write ``index.csv``.

    A combination's CSV is written last and atomically, so its presence
    marks a complete combination and reruns skip it.
    """
    _check_fraction(c, min_sources)
    try:
        matrix = load_matrix(matrix_file)
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{matrix_file}: cannot read: {exc.strerror or exc}") from None
    out = Path(output_dir)
    _ensure_dir(out)
    summary = MatrixSummary()
    index_rows = []
    for config in matrix.expand():
        config = _override(config, seed, passes)
        tag = config.tag
        csv_path = out / f"{tag}.csv"
        if csv_path.exists():
            summary.skipped.append(tag)
            status = "done"
        else:
            try:
                manifest = run_scenario(config, out / tag, jobs)
                report, mismatches = analyze_files(
                    manifest.produced_files, c, min_sources=min_sources, oracle=oracle, jobs=jobs
                )
                if mismatches:
                    raise CliError(EXIT_ORACLE, "oracle", "; ".join(mismatches))
                _write(csv_path, export_report_csv(report))
                summary.completed.append(tag)
                status = "done"
            except CliError as exc:
                summary.failed[tag] = f"{exc.category}: {exc}"
                status = "failed"
            except Exception as exc:  # keep going, report at the end
                summary.failed[tag] = f"error: {type(exc).__name__}: {exc}"
                status = "failed"
        if log is not None:
            log(f"{status} {tag}")
        index_rows.append(
            [
                tag,
                str(config.network_size),
                config.setup,
                config.churn.label,
                "true" if config.traffic else "false",
                str(config.params.k),
                status,
                csv_path.name if status == "done" else "",
            ]
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_INDEX_HEADER)
    writer.writerows(index_rows)
    _write(out / "index.csv", buf.getvalue())
    return summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kadconn", description="Kademlia overlay connectivity experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, analysis: bool, simulation: bool) -> None:
        if simulation:
            p.add_argument("--seed", type=int, help="override the config seed")
            p.add_argument("--passes", type=int, help="override the number of passes")
        if analysis:
            p.add_argument("--sample-fraction", "-c", type=float, default=DEFAULT_SAMPLE_FRACTION)
            p.add_argument("--min-sources", type=int, default=DEFAULT_MIN_SOURCES)
            p.add_argument("--oracle", action="store_true", help="cross-check graphs with at most 12 nodes")
        p.add_argument("--jobs", "-j", type=int, default=1, help="worker processes")

    p = sub.add_parser("simulate", help="run one scenario and write snapshots")
    p.add_argument("config")
    p.add_argument("output_dir")
    common(p, analysis=False, simulation=True)

    p = sub.add_parser("analyze", help="compute connectivity of snapshot files")
    p.add_argument("snapshots", help="glob pattern, quote it to keep the shell from expanding it")
    p.add_argument("output_csv")
    common(p, analysis=True, simulation=False)

    p = sub.add_parser("matrix", help="simulate and analyze a scenario matrix")
    p.add_argument("matrix")
    p.add_argument("output_dir")
    common(p, analysis=True, simulation=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    def err(category: str, message: str) -> None:
        print(f"kadconn: {category}: {message}", file=sys.stderr)

    try:
        if args.jobs < 1:
            raise CliError(EXIT_USAGE, "usage", f"--jobs must be >= 1, got {args.jobs}")
        if args.command == "simulate":
            manifest = cmd_simulate(args.config, args.output_dir, seed=args.seed, passes=args.passes, jobs=args.jobs)
            print(f"wrote {len(manifest.produced_files)} snapshots to {manifest.output_dir}")
        elif args.command == "analyze":
            report = cmd_analyze(
                args.snapshots,
                args.output_csv,
                c=args.sample_fraction,
                min_sources=args.min_sources,
                oracle=args.oracle,
                jobs=args.jobs,
            )
            print(f"wrote {len(report)} rows to {args.output_csv}")
        else:
            summary = cmd_matrix(
                args.matrix,
                args.output_dir,
                seed=args.seed,
                passes=args.passes,
                c=args.sample_fraction,
                min_sources=args.min_sources,
                oracle=args.oracle,
                jobs=args.jobs,
                log=print,
            )
            print(
                f"{summary.total} combinations: {len(summary.completed)} run, "
                f"{len(summary.skipped)} already complete, {len(summary.failed)} failed"
            )
            for tag, reason in summary.failed.items():
                err("failed", f"{tag}: {reason}")
            if summary.failed:
                return EXIT_PARTIAL
    except CliError as exc:
        err(exc.category, str(exc))
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
