"""Undirected graphs, BFS node orderings and the graph <-> adjacency-sequence map.

A graph on ``n`` nodes under an ordering ``order`` is encoded as ``n`` bit
vectors. Vector ``i`` (1-based) lists the edges from node ``order[i-1]`` to its
predecessors, oldest predecessor first. With a bounded lookback ``M`` only the
last ``M`` predecessors are kept.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import LABELS, UNLABELED
from .rng import SeededRng


@dataclass(frozen=True)
class LabeledGraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)
    label: str = UNLABELED

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("node count must be non-negative")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, label: str = UNLABELED) -> "LabeledGraph":
        """Build from the strict upper triangle of ``adj``."""
        adj = np.asarray(adj)
        iu, ju = np.nonzero(np.triu(adj, k=1))
        return cls(adj.shape[0], frozenset(zip(iu.tolist(), ju.tolist())), label)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        if self.edges:
            e = np.array(sorted(self.edges))
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nb[i].append(j)
            nb[j].append(i)
        return nb

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def relabel(self, label: str) -> "LabeledGraph":
        return LabeledGraph(self.n, self.edges, label)


@dataclass(frozen=True)
class NodeOrdering:
    perm: tuple

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError("ordering must be a permutation of 0..n-1")
        object.__setattr__(self, "perm", perm)

    def __len__(self) -> int:
        return len(self.perm)

    @classmethod
    def identity(cls, n: int) -> "NodeOrdering":
        return cls(tuple(range(n)))


@dataclass(frozen=True)
class GraphSequence:
    n: int
    vectors: tuple
    label: str = UNLABELED
    lookback: int | None = None

    def __post_init__(self):
        vecs = tuple(np.asarray(v, dtype=np.uint8).ravel() for v in self.vectors)
        if len(vecs) != self.n:
            raise ValueError(f"expected {self.n} vectors, got {len(vecs)}")
        for i, v in enumerate(vecs, start=1):
            want = expected_length(i, self.lookback)
            if v.size != want:
                raise ValueError(f"vector {i} has length {v.size}, expected {want}")
            if np.any(v > 1):
                raise ValueError(f"vector {i} is not binary")
        object.__setattr__(self, "vectors", vecs)

    @property
    def bit_count(self) -> int:
        return int(sum(int(v.sum()) for v in self.vectors))


def expected_length(i: int, lookback: int | None) -> int:
    """Length of the 1-based ``i``-th adjacency vector."""
    return i - 1 if lookback is None else min(i - 1, lookback)


def bfs_ordering(g: LabeledGraph, start: int, rng: SeededRng) -> NodeOrdering:
    """Breadth-first order from ``start`` with neighbours enqueued in shuffled order.

    Disconnected graphs continue from the lowest-index unvisited node.
    """
    if not 0 <= start < max(g.n, 1):
        raise ValueError(f"start node {start} out of range")
    nb = g.neighbors()
    seen = [False] * g.n
    order: list[int] = []
    roots = [start] + list(range(g.n))
    for root in roots:
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in rng.shuffle(nb[v]):
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return NodeOrdering(tuple(order))


def graph_to_sequence(
    g: LabeledGraph, order: NodeOrdering, lookback: int | None = None
) -> GraphSequence:
    if len(order) != g.n:
        raise ValueError("ordering length does not match node count")
    adj = g.adjacency()
    perm = np.array(order.perm, dtype=int)
    permuted = adj[np.ix_(perm, perm)] if g.n else adj
    vectors = []
    for i in range(1, g.n + 1):
        length = expected_length(i, lookback)
        vectors.append(permuted[i - 1, i - 1 - length : i - 1].copy())
    return GraphSequence(g.n, tuple(vectors), g.label, lookback)


def sequence_to_graph(seq: GraphSequence) -> LabeledGraph:
    edges = set()
    for i, v in enumerate(seq.vectors, start=1):
        offset = i - 1 - v.size
        for k in np.flatnonzero(v):
            edges.add((offset + int(k), i - 1))
    return LabeledGraph(seq.n, frozenset(edges), seq.label)


def ordering_bandwidth(g: LabeledGraph, order: NodeOrdering) -> int:
    """Largest position gap between a node and its earliest connected predecessor."""
    pos = np.empty(g.n, dtype=int)
    pos[list(order.perm)] = np.arange(g.n)
    worst = 0
    for i, j in g.edges:
        worst = max(worst, abs(int(pos[i]) - int(pos[j])))
    return worst


def estimate_lookback(
    graphs: Sequence[LabeledGraph],
    samples_per_graph: int,
    rng: SeededRng,
    margin: int = 0,
) -> int:
    """Smallest lookback that encodes every sampled BFS ordering without loss, plus ``margin``."""
    if not graphs:
        raise ValueError("estimate_lookback needs at least one graph")
    worst = 0
    for g in graphs:
        if g.n == 0:
            continue
        for _ in range(samples_per_graph):
            order = bfs_ordering(g, int(rng.integers(g.n)), rng)
            worst = max(worst, ordering_bandwidth(g, order))
    return worst + margin

