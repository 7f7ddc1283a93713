"""Directed graphs, vertex splitting and vertex connectivity via max-flow.

A directed graph is turned into a unit-capacity flow network by splitting
every vertex ``v`` into an in-vertex ``v'`` (index ``2v``) and an out-vertex
``v''`` (index ``2v + 1``) joined by a single arc of capacity one. The maximum
``v'' -> w'`` flow in that network equals the number of vertex-disjoint
``v -> w`` paths, i.e. the pairwise vertex connectivity for non-adjacent
``v`` and ``w``.

Max-flow is a highest-label push-relabel (preflow phase only) with the gap
heuristic and periodic global relabeling, compiled with numba.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from numba import njit

__all__ = [
    "DiGraph",
    "FlowNetwork",
    "ConnectivityResult",
    "PairNotApplicable",
    "GraphTooLarge",
    "even_transform",
    "in_vertex",
    "out_vertex",
    "max_flow",
    "vertex_connectivity_pair",
    "vertex_connectivity_graph",
    "select_sources",
    "brute_force_vertex_connectivity",
]


class PairNotApplicable(ValueError):
    """Raised for identical or adjacent vertex pairs, where κ(v, w) is undefined."""


class GraphTooLarge(ValueError):
    """Raised when exhaustive enumeration would be infeasible."""


class DiGraph:
    """Simple directed graph on vertices ``0..n-1``.

    Self-loops are rejected; adding an existing edge again is a no-op, so the
    edge set never contains parallel edges.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise ValueError(f"vertex count must be non-negative, got {n}")
        self.n = n
        self._succ: list[set[int]] = [set() for _ in range(n)]
        self._m = 0
        for u, v in edges:
            self.add_edge(u, v)

    def add_edge(self, u: int, v: int) -> None:
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ValueError(f"edge ({u}, {v}) outside vertex range [0, {self.n})")
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        succ = self._succ[u]
        if v not in succ:
            succ.add(v)
            self._m += 1

    @property
    def m(self) -> int:
        return self._m

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._succ[u]

    def successors(self, u: int) -> set[int]:
        return self._succ[u]

    def out_degree(self, u: int) -> int:
        return len(self._succ[u])

    def in_degrees(self) -> list[int]:
        deg = [0] * self.n
        for succ in self._succ:
            for v in succ:
                deg[v] += 1
        return deg

    def edges(self) -> list[tuple[int, int]]:
        """All edges, sorted."""
        return sorted((u, v) for u in range(self.n) for v in self._succ[u])

    def is_complete(self) -> bool:
        return all(len(s) == self.n - 1 for s in self._succ)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiGraph):
            return NotImplemented
        return self.n == other.n and self._succ == other._succ

    def __repr__(self) -> str:
        return f"DiGraph(n={self.n}, m={self.m})"


def in_vertex(v: int) -> int:
    """Index of ``v'`` in the split network."""
    return 2 * v


def out_vertex(v: int) -> int:
    """Index of ``v''`` in the split network."""
    return 2 * v + 1


class FlowNetwork:
    """Directed network with integer arc capacities.

    Arcs are kept in insertion order (``tails``, ``heads``, ``caps``) and also
    as a compressed residual structure where every arc has a paired reverse
    arc of capacity zero. The residual base is never mutated; each max-flow
    call works on a copy, so one network serves any number of queries.
    """

    def __init__(
        self,
        n: int,
        arcs: Sequence[tuple[int, int, int]],
        original_n: int | None = None,
    ):
        self.n = n
        self.original_n = original_n
        arr = np.asarray(arcs, dtype=np.int64).reshape(-1, 3)
        if arr.size and (arr[:, :2].min() < 0 or arr[:, :2].max() >= n):
            raise ValueError("arc endpoint outside vertex range")
        if arr.size and arr[:, 2].min() < 0:
            raise ValueError("negative arc capacity")
        self.tails = arr[:, 0].copy()
        self.heads = arr[:, 1].copy()
        self.caps = arr[:, 2].copy()
        self._build_residual()

    @property
    def num_arcs(self) -> int:
        return len(self.tails)

    def arcs(self) -> list[tuple[int, int, int]]:
        return list(zip(self.tails.tolist(), self.heads.tolist(), self.caps.tolist()))

    def in_vertex(self, v: int) -> int:
        return in_vertex(v)

    def out_vertex(self, v: int) -> int:
        return out_vertex(v)

    def _build_residual(self) -> None:
        m = self.num_arcs
        tail = np.concatenate([self.tails, self.heads])
        head = np.concatenate([self.heads, self.tails])
        cap = np.concatenate([self.caps, np.zeros(m, dtype=np.int64)])
        partner = np.concatenate([np.arange(m, 2 * m), np.arange(0, m)])
        order = np.argsort(tail, kind="stable")
        position = np.empty(2 * m, dtype=np.int64)
        position[order] = np.arange(2 * m)
        self._head = head[order]
        self._cap = cap[order]
        self._rev = position[partner[order]]
        counts = np.bincount(tail, minlength=self.n) if m else np.zeros(self.n, np.int64)
        self._first = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=self._first[1:])

    def _check_vertex(self, v: int) -> None:
        if not 0 <= v < self.n:
            raise ValueError(f"vertex {v} outside [0, {self.n})")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowNetwork):
            return NotImplemented
        return self.n == other.n and self.arcs() == other.arcs()

    def __repr__(self) -> str:
        return f"FlowNetwork(n={self.n}, arcs={self.num_arcs})"


@dataclass(frozen=True)
class ConnectivityResult:
    kappa_min: int
    kappa_avg: Fraction
    pairs_evaluated: int
    complete: bool
    sources: tuple[int, ...] = ()

    @property
    def disconnected(self) -> bool:
        return self.kappa_min == 0


def even_transform(g: DiGraph) -> FlowNetwork:
    """Split every vertex of ``g``; ``2n`` vertices and ``m + n`` unit arcs."""
    arcs: list[tuple[int, int, int]] = [(in_vertex(v), out_vertex(v), 1) for v in range(g.n)]
    seen = 0
    for u in range(g.n):
        for v in sorted(g.successors(u)):
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            arcs.append((out_vertex(u), in_vertex(v), 1))
            seen += 1
    if seen != g.m:
        raise ValueError("graph edge count does not match its edge set")
    return FlowNetwork(2 * g.n, arcs, original_n=g.n)


# ---------------------------------------------------------------- push-relabel


@njit(cache=True)
def _global_relabel(first, head, rev, res, n, s, t, label, queue):
    for i in range(n):
        label[i] = n
    label[t] = 0
    queue[0] = t
    qh = 0
    qt = 1
    while qh < qt:
        x = queue[qh]
        qh += 1
        dx = label[x] + 1
        for a in range(first[x], first[x + 1]):
            y = head[a]
            if label[y] == n and y != s and res[rev[a]] > 0:
                label[y] = dx
                queue[qt] = y
                qt += 1


@njit(cache=True)
def _rebuild_buckets(first, n, s, t, label, excess, cur, count, bhead, bnext):
    for i in range(n + 1):
        count[i] = 0
        bhead[i] = -1
    amax = -1
    for v in range(n):
        d = label[v]
        cur[v] = first[v]
        if d < n:
            count[d] += 1
            if excess[v] > 0 and v != s and v != t:
                bnext[v] = bhead[d]
                bhead[d] = v
                if d > amax:
                    amax = d
    return amax


@njit(cache=True)
def _preflow_value(first, head, rev, cap, n, s, t, res, excess, label, cur, count, bhead, bnext, queue):
    for a in range(res.shape[0]):
        res[a] = cap[a]
    for v in range(n):
        excess[v] = 0
    for a in range(first[s], first[s + 1]):
        c = res[a]
        if c > 0:
            v = head[a]
            res[a] = 0
            res[rev[a]] += c
            excess[v] += c
            excess[s] -= c
    _global_relabel(first, head, rev, res, n, s, t, label, queue)
    label[s] = n
    amax = _rebuild_buckets(first, n, s, t, label, excess, cur, count, bhead, bnext)
    relabels = 0
    while amax >= 0:
        u = bhead[amax]
        if u == -1:
            amax -= 1
            continue
        bhead[amax] = bnext[u]
        if label[u] != amax or excess[u] == 0:
            continue
        while excess[u] > 0:
            du = label[u]
            a = cur[u]
            end = first[u + 1]
            while a < end:
                if res[a] > 0:
                    v = head[a]
                    if label[v] == du - 1:
                        delta = excess[u] if excess[u] < res[a] else res[a]
                        res[a] -= delta
                        res[rev[a]] += delta
                        if excess[v] == 0 and v != t:
                            dv = label[v]
                            bnext[v] = bhead[dv]
                            bhead[dv] = v
                            if dv > amax:
                                amax = dv
                        excess[v] += delta
                        excess[u] -= delta
                        if excess[u] == 0:
                            break
                a += 1
            cur[u] = a
            if excess[u] == 0:
                break
            # relabel u
            relabels += 1
            newd = n
            for b in range(first[u], end):
                if res[b] > 0:
                    dv = label[head[b]] + 1
                    if dv < newd:
                        newd = dv
            count[du] -= 1
            if count[du] == 0:
                # gap: nothing above du can reach t any more
                for x in range(n):
                    dx = label[x]
                    if du < dx < n:
                        count[dx] -= 1
                        label[x] = n
                newd = n
            if newd >= n:
                label[u] = n
                break
            label[u] = newd
            count[newd] += 1
            cur[u] = first[u]
            if relabels >= n:
                relabels = 0
                _global_relabel(first, head, rev, res, n, s, t, label, queue)
                label[s] = n
                amax = _rebuild_buckets(first, n, s, t, label, excess, cur, count, bhead, bnext)
                break
    return excess[t]


@njit(cache=True)
def _max_flow_batch(first, head, rev, cap, n, sources, sinks):
    narcs = cap.shape[0]
    res = np.empty(narcs, dtype=np.int64)
    excess = np.empty(n, dtype=np.int64)
    label = np.empty(n, dtype=np.int64)
    cur = np.empty(n, dtype=np.int64)
    count = np.empty(n + 1, dtype=np.int64)
    bhead = np.empty(n + 1, dtype=np.int64)
    bnext = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    out = np.empty(sources.shape[0], dtype=np.int64)
    for i in range(sources.shape[0]):
        out[i] = _preflow_value(
            first, head, rev, cap, n, sources[i], sinks[i],
            res, excess, label, cur, count, bhead, bnext, queue,
        )
    return out


def _max_flow_many(net: FlowNetwork, sources: np.ndarray, sinks: np.ndarray) -> np.ndarray:
    return _max_flow_batch(
        net._first, net._head, net._rev, net._cap, net.n,
        np.ascontiguousarray(sources, dtype=np.int64),
        np.ascontiguousarray(sinks, dtype=np.int64),
    )


def max_flow(net: FlowNetwork, s: int, t: int) -> int:
    """Exact maximum ``s -> t`` flow value. ``net`` is left untouched."""
    net._check_vertex(s)
    net._check_vertex(t)
    if s == t:
        raise ValueError("source and sink must differ")
    return int(_max_flow_many(net, np.array([s]), np.array([t]))[0])


# ---------------------------------------------------------------- connectivity


def vertex_connectivity_pair(g: DiGraph, v: int, w: int, net: FlowNetwork | None = None) -> int:
    """κ(v, w): number of vertex-disjoint ``v -> w`` paths.

    Pass a precomputed ``net = even_transform(g)`` to amortise the split
    over many queries.
    """
    _check_pair(g, v, w)
    if net is None:
        net = even_transform(g)
    return max_flow(net, out_vertex(v), in_vertex(w))


def _check_pair(g: DiGraph, v: int, w: int) -> None:
    if not (0 <= v < g.n and 0 <= w < g.n):
        raise ValueError(f"pair ({v}, {w}) outside vertex range [0, {g.n})")
    if v == w:
        raise PairNotApplicable(f"identical pair ({v}, {w})")
    if g.has_edge(v, w):
        raise PairNotApplicable(f"adjacent pair ({v}, {w})")


def select_sources(g: DiGraph, c: float, min_sources: int = 1) -> list[int]:
    """The ``ceil(c*n)`` vertices of smallest out-degree, ties by index."""
    count = max(math.ceil(c * g.n - 1e-9), min(min_sources, g.n))
    order = sorted(range(g.n), key=lambda v: (g.out_degree(v), v))
    return order[: min(count, g.n)]


def vertex_connectivity_graph(g: DiGraph, c: float = 1.0, *, min_sources: int = 1) -> ConnectivityResult:
    """Minimum and mean κ(v, w) over non-adjacent pairs from sampled sources.

    With ``c == 1`` every ordered non-adjacent pair is evaluated and
    ``kappa_min`` is the exact graph connectivity. For ``c < 1`` only sources
    among the smallest-out-degree vertices are used, which can overestimate
    but never underestimate the exact value.
    """
    if g.n < 2:
        raise ValueError(f"connectivity needs at least 2 vertices, got {g.n}")
    if not (0 < c <= 1):
        raise ValueError(f"sample fraction must lie in (0, 1], got {c}")
    if g.is_complete():
        return ConnectivityResult(g.n - 1, Fraction(g.n - 1), 0, True)
    sources = select_sources(g, c, min_sources)
    src: list[int] = []
    dst: list[int] = []
    for v in sources:
        succ = g.successors(v)
        for w in range(g.n):
            if w != v and w not in succ:
                src.append(out_vertex(v))
                dst.append(in_vertex(w))
    net = even_transform(g)
    flows = _max_flow_many(net, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))
    total = int(flows.sum())
    return ConnectivityResult(
        kappa_min=int(flows.min()),
        kappa_avg=Fraction(total, len(flows)),
        pairs_evaluated=len(flows),
        complete=False,
        sources=tuple(sources),
    )


# ---------------------------------------------------------------- oracle


def _reaches(g: DiGraph, v: int, w: int, removed: frozenset[int] | set[int]) -> bool:
    seen = {v}
    todo = deque([v])
    while todo:
        x = todo.popleft()
        for y in g.successors(x):
            if y == w:
                return True
            if y not in seen and y not in removed:
                seen.add(y)
                todo.append(y)
    return False


def brute_force_vertex_connectivity(g: DiGraph, v: int, w: int, max_vertices: int = 12) -> int:
    """Smallest vertex set separating ``v`` from ``w``, by exhaustive search.

    Exponential in ``n``; intended as a test oracle only.
    """
    if g.n > max_vertices:
        raise GraphTooLarge(f"{g.n} vertices exceeds enumeration limit {max_vertices}")
    _check_pair(g, v, w)
    others = [x for x in range(g.n) if x not in (v, w)]
    for size in range(len(others) + 1):
        for cut in itertools.combinations(others, size):
            if not _reaches(g, v, w, set(cut)):
                return size
    raise AssertionError("unreachable: removing all other vertices separates a non-adjacent pair")
