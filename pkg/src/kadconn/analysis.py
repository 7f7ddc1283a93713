"""Connectivity analysis of routing-table snapshots.

Turns snapshots into directed connectivity graphs, computes κ per snapshot,
derives resilience bounds and writes DIMACS and CSV interchange files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .flowgraph import ConnectivityResult, DiGraph, FlowNetwork, vertex_connectivity_graph
from .snapshot import Snapshot

__all__ = [
    "DEFAULT_SAMPLE_FRACTION",
    "DEFAULT_MIN_SOURCES",
    "ReportRow",
    "ConnectivityReport",
    "ResilienceBound",
    "DimacsProblem",
    "DimacsFormatError",
    "snapshot_to_graph",
    "analyze_snapshot",
    "resilience_bound",
    "export_dimacs",
    "parse_dimacs",
    "export_report_csv",
    "near_undirected_ratio",
    "format_decimal",
]

DEFAULT_SAMPLE_FRACTION = 0.02
DEFAULT_MIN_SOURCES = 5

CSV_HEADER = "pass,time_min,live_nodes,kappa_min,kappa_avg,pairs_evaluated,sample_fraction,setup,churn,traffic,k"


@dataclass(frozen=True)
class ReportRow:
    pass_index: int
    time_ms: int
    live_nodes: int
    kappa_min: int | None
    kappa_avg: Fraction | None
    pairs_evaluated: int
    sample_fraction: float
    setup: str = ""
    churn: str = ""
    traffic: str = ""
    k: str = ""

    @property
    def time_min(self) -> Fraction:
        return Fraction(self.time_ms, 60000)

    @property
    def defined(self) -> bool:
        return self.kappa_min is not None


@dataclass
class ConnectivityReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        self.rows.append(row)
        self.rows.sort(key=lambda r: (r.pass_index, r.time_ms))

    def extend(self, rows: Iterable[ReportRow]) -> None:
        self.rows.extend(rows)
        self.rows.sort(key=lambda r: (r.pass_index, r.time_ms))

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ResilienceBound:
    """``kappa > r >= a``: up to ``r = kappa - 1`` subverted nodes are tolerated.

    ``r`` is ``None`` for a disconnected network (``kappa == 0``).
    """

    kappa: int
    r: int | None

    @property
    def max_tolerated_attackers(self) -> int | None:
        return self.r

    def tolerates(self, attackers: int) -> bool:
        return self.r is not None and attackers <= self.r


def snapshot_to_graph(snap: Snapshot) -> tuple[DiGraph, list[int]]:
    """Connectivity graph of the live overlay, plus vertex -> node id.

    Vertices follow the snapshot's owner order. Contacts that are not live
    owners in the snapshot are dropped.
    """
    ids = list(snap.nodes)
    index = {node_id: i for i, node_id in enumerate(ids)}
    g = DiGraph(len(ids))
    for i, node_id in enumerate(ids):
        for contact in snap.nodes[node_id]:
            j = index.get(contact)
            if j is not None and j != i:
                g.add_edge(i, j)
    return g, ids


def analyze_snapshot(
    snap: Snapshot,
    c: float = DEFAULT_SAMPLE_FRACTION,
    *,
    min_sources: int = DEFAULT_MIN_SOURCES,
    tags: dict[str, str] | None = None,
) -> ReportRow:
    tags = tags or {}
    if not 0 < c <= 1:
        raise ValueError(f"sample fraction must lie in (0, 1], got {c}")
    base = dict(
        pass_index=snap.pass_index,
        time_ms=snap.time,
        live_nodes=snap.live_count,
        sample_fraction=c,
        setup=tags.get("setup", ""),
        churn=tags.get("churn", ""),
        traffic=tags.get("traffic", ""),
        k=tags.get("k", str(snap.k)),
    )
    if snap.live_count < 2:
        return ReportRow(kappa_min=None, kappa_avg=None, pairs_evaluated=0, **base)
    g, _ = snapshot_to_graph(snap)
    result: ConnectivityResult = vertex_connectivity_graph(g, c, min_sources=min_sources)
    return ReportRow(
        kappa_min=result.kappa_min,
        kappa_avg=result.kappa_avg,
        pairs_evaluated=result.pairs_evaluated,
        **base,
    )


def resilience_bound(kappa: int) -> ResilienceBound:
    if kappa < 0:
        raise ValueError(f"connectivity must be non-negative, got {kappa}")
    return ResilienceBound(kappa, kappa - 1 if kappa > 0 else None)


def near_undirected_ratio(g: DiGraph) -> float:
    """Fraction of edges whose reverse edge is also present."""
    if g.m == 0:
        raise ValueError("ratio undefined for a graph without edges")
    mutual = sum(1 for u in range(g.n) for v in g.successors(u) if g.has_edge(v, u))
    return mutual / g.m


# ---------------------------------------------------------------- DIMACS


class DimacsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DimacsProblem:
    network: FlowNetwork
    source: int
    sink: int


def export_dimacs(net: FlowNetwork, s: int, t: int) -> str:
    """DIMACS max-flow problem text, 1-based vertices, arcs in network order."""
    if not (0 <= s < net.n and 0 <= t < net.n) or s == t:
        raise ValueError(f"invalid source/sink pair ({s}, {t}) for {net.n} vertices")
    lines = [f"p max {net.n} {net.num_arcs}", f"n {s + 1} s", f"n {t + 1} t"]
    lines.extend(f"a {u + 1} {v + 1} {c}" for u, v, c in net.arcs())
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> DimacsProblem:
    """Read a DIMACS max-flow problem (comment lines ``c ...`` allowed)."""
    header = None
    source = sink = None
    arcs: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0] == "c":
            continue
        try:
            if parts[0] == "p":
                if header is not None or len(parts) != 4 or parts[1] != "max":
                    raise DimacsFormatError(f"line {lineno}: bad problem line")
                header = (int(parts[2]), int(parts[3]))
            elif parts[0] == "n":
                if len(parts) != 3 or parts[2] not in ("s", "t"):
                    raise DimacsFormatError(f"line {lineno}: bad node descriptor")
                if parts[2] == "s":
                    source = int(parts[1]) - 1
                else:
                    sink = int(parts[1]) - 1
            elif parts[0] == "a":
                if len(parts) != 4:
                    raise DimacsFormatError(f"line {lineno}: bad arc line")
                arcs.append((int(parts[1]) - 1, int(parts[2]) - 1, int(parts[3])))
            else:
                raise DimacsFormatError(f"line {lineno}: unknown line type {parts[0]!r}")
        except ValueError as exc:
            if isinstance(exc, DimacsFormatError):
                raise
            raise DimacsFormatError(f"line {lineno}: {exc}") from None
    if header is None or source is None or sink is None:
        raise DimacsFormatError("missing problem line or source/sink descriptor")
    n, m = header
    if len(arcs) != m:
        raise DimacsFormatError(f"header declares {m} arcs, found {len(arcs)}")
    try:
        net = FlowNetwork(n, arcs)
    except ValueError as exc:
        raise DimacsFormatError(str(exc)) from None
    return DimacsProblem(net, source, sink)


# ---------------------------------------------------------------- CSV


def format_decimal(value: Fraction | int | float, places: int = 4) -> str:
    """At most ``places`` decimals, round-half-even, trailing zeros stripped."""
    q = round(Fraction(value), places)
    sign = "-" if q < 0 else ""
    q = abs(q)
    scaled = q * 10**places
    assert scaled.denominator == 1
    whole, frac = divmod(int(scaled), 10**places)
    if frac == 0:
        return f"{sign}{whole}"
    digits = str(frac).rjust(places, "0").rstrip("0")
    return f"{sign}{whole}.{digits}"


def export_report_csv(report: ConnectivityReport) -> str:
    lines = [CSV_HEADER]
    for r in sorted(report.rows, key=lambda r: (r.pass_index, r.time_ms)):
        lines.append(
            ",".join(
                [
                    str(r.pass_index),
                    format_decimal(r.time_min),
                    str(r.live_nodes),
                    "NA" if r.kappa_min is None else str(r.kappa_min),
                    "NA" if r.kappa_avg is None else format_decimal(r.kappa_avg),
                    str(r.pairs_evaluated),
                    format_decimal(Fraction(r.sample_fraction).limit_denominator(10**6)),
                    r.setup,
                    r.churn,
                    r.traffic,
                    r.k,
                ]
            )
        )
    return "\n".join(lines) + "\n"
