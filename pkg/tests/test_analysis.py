from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kadconn.analysis import (
    ConnectivityReport,
    DimacsFormatError,
    ReportRow,
    analyze_snapshot,
    export_dimacs,
    export_report_csv,
    format_decimal,
    near_undirected_ratio,
    parse_dimacs,
    resilience_bound,
    snapshot_to_graph,
)
from kadconn.flowgraph import DiGraph, FlowNetwork, even_transform
from kadconn.kademlia import KademliaParams
from kadconn.simulator import ChurnSpec, ScenarioConfig, simulate_pass
from kadconn.snapshot import Snapshot

HEADER = "pass,time_min,live_nodes,kappa_min,kappa_avg,pairs_evaluated,sample_fraction,setup,churn,traffic,k"


def snap(nodes, time=0):
    return Snapshot(time=time, b=8, k=20, pass_index=0, nodes=nodes)


# ---------------------------------------------------------------- graphs


def test_full_mesh_snapshot():
    g, ids = snapshot_to_graph(snap({1: (2, 3), 2: (1, 3), 3: (1, 2)}))
    assert (g.n, g.m) == (3, 6)
    assert ids == [1, 2, 3]


def test_dead_contacts_dropped():
    g, ids = snapshot_to_graph(snap({1: (2, 99), 2: (1,)}))
    assert g.n == 2 and g.edges() == [(0, 1), (1, 0)]


def test_empty_snapshot():
    g, ids = snapshot_to_graph(snap({}))
    assert (g.n, g.m, ids) == (0, 0, [])


def test_two_node_mutual_snapshot_is_complete():
    row = analyze_snapshot(snap({1: (2,), 2: (1,)}))
    assert row.kappa_min == 1
    assert row.pairs_evaluated == 0


def test_small_snapshot_gives_marker_row():
    row = analyze_snapshot(snap({1: ()}))
    assert row.kappa_min is None and row.kappa_avg is None and not row.defined


def test_disconnected_snapshot_reports_zero():
    row = analyze_snapshot(snap({1: (2,), 2: (1,), 3: (4,), 4: (3,)}), c=1.0)
    assert row.kappa_min == 0


def test_analyze_rejects_bad_fraction():
    with pytest.raises(ValueError):
        analyze_snapshot(snap({1: (2,), 2: (1,)}), c=0)


@pytest.fixture(scope="module")
def converged():
    cfg = ScenarioConfig(network_size=250, params=KademliaParams(k=20), duration=30)
    return simulate_pass(cfg, 0).snapshots[-1]


def test_converged_snapshot_connectivity(converged):
    assert converged.time == 30 * 60_000
    row = analyze_snapshot(converged, 0.02)
    assert row.kappa_min in (20, 21)
    assert row.kappa_min <= row.kappa_avg


def test_converged_snapshot_near_undirected(converged):
    g, _ = snapshot_to_graph(converged)
    assert near_undirected_ratio(g) > 0.95


def test_ten_node_remnant_is_fully_connected():
    cfg = ScenarioConfig(
        network_size=60, params=KademliaParams(b=32, k=10), churn=ChurnSpec(0, 10, 10), traffic=True, duration=60
    )
    last = simulate_pass(cfg, 0).snapshots[-1]
    assert last.live_count == 10
    assert analyze_snapshot(last, 1.0).kappa_min == 9


def test_snapshot_to_graph_is_pure(converged):
    assert snapshot_to_graph(converged) == snapshot_to_graph(converged)


# ---------------------------------------------------------------- resilience


def test_resilience_examples():
    assert resilience_bound(21).r == 20
    one = resilience_bound(1)
    assert one.r == 0 and one.tolerates(0) and not one.tolerates(1)
    zero = resilience_bound(0)
    assert zero.r is None and zero.max_tolerated_attackers is None and not zero.tolerates(0)
    with pytest.raises(ValueError):
        resilience_bound(-1)


@given(st.integers(1, 1000), st.integers(0, 1000))
def test_resilience_inequality(kappa, a):
    bound = resilience_bound(kappa)
    assert bound.max_tolerated_attackers == bound.r == kappa - 1
    if bound.tolerates(a):
        assert kappa > bound.r >= a


# ---------------------------------------------------------------- ratio


def test_ratio_examples():
    assert near_undirected_ratio(DiGraph(3, [(0, 1), (1, 0), (1, 2), (2, 1)])) == 1.0
    assert near_undirected_ratio(DiGraph(3, [(0, 1), (1, 2), (2, 0)])) == 0.0
    assert near_undirected_ratio(DiGraph(2, [(0, 1), (1, 0)])) == 1.0
    with pytest.raises(ValueError):
        near_undirected_ratio(DiGraph(3))


# ---------------------------------------------------------------- DIMACS


def test_dimacs_minimal():
    text = export_dimacs(FlowNetwork(2, [(0, 1, 1)]), 0, 1)
    assert text == "p max 2 1\nn 1 s\nn 2 t\na 1 2 1\n"


def test_dimacs_transformed_header():
    net = even_transform(DiGraph(3, [(0, 1), (1, 2), (2, 0)]))
    assert export_dimacs(net, 1, 4).splitlines()[0] == "p max 6 6"


def test_dimacs_rejects_bad_pair():
    net = FlowNetwork(2, [(0, 1, 1)])
    for s, t in ((0, 0), (0, 2), (-1, 1)):
        with pytest.raises(ValueError):
            export_dimacs(net, s, t)


@given(st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(0, 9)), max_size=20),
    st.integers(0, n - 2),
)))
def test_dimacs_round_trip(case):
    n, arcs, s = case
    net = FlowNetwork(n, arcs)
    text = export_dimacs(net, s, n - 1)
    problem = parse_dimacs(text)
    assert problem.network == net
    assert (problem.source, problem.sink) == (s, n - 1)
    lines = text.split("\n")
    assert lines[-1] == "" and all(line == line.rstrip() for line in lines)
    assert lines[0] == f"p max {n} {len(arcs)}"
    assert sum(1 for line in lines if line.startswith("a ")) == len(arcs)


def test_dimacs_reader_accepts_comments():
    problem = parse_dimacs("c hello\np max 2 1\nn 1 s\nn 2 t\nc mid\na 1 2 4\n")
    assert problem.network.arcs() == [(0, 1, 4)]


@pytest.mark.parametrize(
    "text",
    [
        "",
        "p max 2 1\nn 1 s\na 1 2 1\n",
        "p max 2 2\nn 1 s\nn 2 t\na 1 2 1\n",
        "p min 2 1\nn 1 s\nn 2 t\na 1 2 1\n",
        "p max 2 1\nn 1 s\nn 2 t\na 1 3 1\n",
        "p max 2 1\nn 1 s\nn 2 t\na 1 x 1\n",
        "p max 2 1\nn 1 q\nn 2 t\na 1 2 1\n",
        "p max 2 1\nn 1 s\nn 2 t\nz\n",
    ],
)
def test_dimacs_reader_rejects(text):
    with pytest.raises(DimacsFormatError):
        parse_dimacs(text)


# ---------------------------------------------------------------- CSV


def test_empty_report_is_header_only():
    assert export_report_csv(ConnectivityReport()) == HEADER + "\n"


def row(**kw):
    base = dict(
        pass_index=0, time_ms=600_000, live_nodes=250, kappa_min=20, kappa_avg=Fraction(41, 2),
        pairs_evaluated=1200, sample_fraction=0.02, setup="R", churn="none", traffic="false", k="20",
    )
    base.update(kw)
    return ReportRow(**base)


def test_one_row_report():
    report = ConnectivityReport()
    report.add(row())
    assert export_report_csv(report) == HEADER + "\n0,10,250,20,20.5,1200,0.02,R,none,false,20\n"


def test_rows_sorted_by_pass_then_time():
    report = ConnectivityReport()
    report.extend([row(pass_index=1, time_ms=0), row(pass_index=0, time_ms=600_000), row(pass_index=0, time_ms=45_000)])
    lines = export_report_csv(report).splitlines()[1:]
    assert [line.split(",")[:2] for line in lines] == [["0", "0.75"], ["0", "10"], ["1", "0"]]


def test_marker_row_prints_na():
    report = ConnectivityReport([row(kappa_min=None, kappa_avg=None, pairs_evaluated=0, live_nodes=1)])
    assert export_report_csv(report).splitlines()[1] == "0,10,1,NA,NA,0,0.02,R,none,false,20"


def test_decimal_formatting_half_even():
    assert format_decimal(Fraction(1, 8)) == "0.125"
    assert format_decimal(Fraction(123445, 10**6)) == "0.1234"
    assert format_decimal(Fraction(123455, 10**6)) == "0.1235"
    assert format_decimal(Fraction(200005, 10**5)) == "2"
    assert format_decimal(Fraction(2, 3)) == "0.6667"
    assert format_decimal(Fraction(-5, 4)) == "-1.25"
    assert format_decimal(7) == "7"


def test_report_invariant_min_not_above_avg(converged):
    r = analyze_snapshot(converged, 0.02)
    assert r.kappa_min <= r.kappa_avg
