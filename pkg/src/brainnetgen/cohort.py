"""Synthetic two-population cohorts and traditional baseline generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import AUTISM, CONTROL, UNLABELED
from .graphs import LabeledGraph
from .metrics import avg_clustering
from .rng import SeededRng


@dataclass
class SbmSpec:
    n: int
    blocks: list[int]
    p_in: float
    p_out: float
    label: str = UNLABELED

    def __post_init__(self):
        if len(self.blocks) != self.n:
            raise ValueError("need one block id per node")
        ids = sorted(set(self.blocks))
        if ids != list(range(len(ids))):
            raise ValueError("block ids must cover 0..blocks-1")
        for p in (self.p_in, self.p_out):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")

    @classmethod
    def equal_blocks(cls, n: int, n_blocks: int, p_in: float, p_out: float, label: str = UNLABELED):
        blocks = [min(i * n_blocks // n, n_blocks - 1) for i in range(n)]
        return cls(n, blocks, p_in, p_out, label)

    def probability_matrix(self) -> np.ndarray:
        b = np.array(self.blocks)
        return np.where(b[:, None] == b[None, :], self.p_in, self.p_out)


def sample_sbm(spec: SbmSpec, count: int, rng: SeededRng) -> list[LabeledGraph]:
    iu, ju = np.triu_indices(spec.n, k=1)
    probs = spec.probability_matrix()[iu, ju]
    out = []
    for _ in range(count):
        keep = rng.uniform(probs.size) < probs
        out.append(LabeledGraph(spec.n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())), spec.label))
    return out


def _try_swap(edges: list, present: set, k1: int, k2: int, flip: bool):
    (a, b), (c, d) = edges[k1], edges[k2]
    if flip:
        c, d = d, c
    # (a, b), (c, d) -> (a, d), (c, b)
    e1 = (min(a, d), max(a, d))
    e2 = (min(c, b), max(c, b))
    if a == d or c == b or e1 == e2 or e1 in present or e2 in present:
        return None
    return e1, e2


def baseline_degree_preserving(reference: LabeledGraph, rewires: int, rng: SeededRng) -> LabeledGraph:
    """Randomize by ``rewires`` double-edge-swap attempts; invalid swaps are skipped."""
    edges = sorted(reference.edges)
    present = set(edges)
    if len(edges) < 2:
        return reference
    for _ in range(rewires):
        k1, k2 = (int(v) for v in rng.integers(0, len(edges), size=2))
        if k1 == k2:
            continue
        swap = _try_swap(edges, present, k1, k2, bool(rng.integers(0, 2)))
        if swap is None:
            continue
        present.discard(edges[k1])
        present.discard(edges[k2])
        edges[k1], edges[k2] = swap
        present.update(swap)
    return LabeledGraph(reference.n, frozenset(edges), reference.label)


def _closing_swap(g_adj: np.ndarray, edges: list, present: set, rng: SeededRng):
    """Propose a swap that closes an open wedge u-v-w by adding u-w."""
    n = g_adj.shape[0]
    v = int(rng.integers(n))
    nb = np.flatnonzero(g_adj[v])
    if nb.size < 2:
        return None
    u, w = (int(x) for x in nb[rng.permutation(nb.size)[:2]])
    if g_adj[u, w]:
        return None
    ua = [int(x) for x in np.flatnonzero(g_adj[u]) if x not in (v, w)]
    wb = [int(x) for x in np.flatnonzero(g_adj[w]) if x not in (v, u)]
    if not ua or not wb:
        return None
    a = ua[int(rng.integers(len(ua)))]
    b = wb[int(rng.integers(len(wb)))]
    new_ab = (min(a, b), max(a, b))
    if a == b or new_ab in present:
        return None
    old1, old2 = (min(u, a), max(u, a)), (min(w, b), max(w, b))
    return edges.index(old1), edges.index(old2), (min(u, w), max(u, w)), new_ab


def baseline_clustering_match(
    reference: LabeledGraph, target_cc: float, iterations: int, rng: SeededRng
) -> LabeledGraph:
    """Degree-preserving swaps accepted only when they bring average clustering closer to ``target_cc``.

    Proposals close open wedges while clustering is below target and are
    uniform double-edge swaps while it is above.
    """
    edges = sorted(reference.edges)
    present = set(edges)
    if len(edges) < 2:
        return reference
    adj = reference.adjacency()
    current = avg_clustering(reference)
    for _ in range(iterations):
        gap = abs(current - target_cc)
        if gap == 0.0:
            break
        if current < target_cc:
            prop = _closing_swap(adj, edges, present, rng)
            if prop is None:
                continue
            k1, k2, e1, e2 = prop
        else:
            k1, k2 = (int(v) for v in rng.integers(0, len(edges), size=2))
            if k1 == k2:
                continue
            swap = _try_swap(edges, present, k1, k2, bool(rng.integers(0, 2)))
            if swap is None:
                continue
            e1, e2 = swap
        old = (edges[k1], edges[k2])
        trial = adj.copy()
        for i, j in old:
            trial[i, j] = trial[j, i] = 0
        for i, j in (e1, e2):
            trial[i, j] = trial[j, i] = 1
        cc = avg_clustering(LabeledGraph.from_adjacency(trial))
        if abs(cc - target_cc) < gap:
            adj, current = trial, cc
            present.difference_update(old)
            present.update((e1, e2))
            edges[k1], edges[k2] = e1, e2
    return LabeledGraph(reference.n, frozenset(edges), reference.label)


def make_two_population_cohort(
    spec_a: SbmSpec, spec_b: SbmSpec, count_per_class: int, rng: SeededRng
) -> list[LabeledGraph]:
    """``count_per_class`` autism graphs from ``spec_a`` and control graphs from ``spec_b``, shuffled."""
    a = [g.relabel(AUTISM) for g in sample_sbm(spec_a, count_per_class, rng.child("class_a"))]
    b = [g.relabel(CONTROL) for g in sample_sbm(spec_b, count_per_class, rng.child("class_b"))]
    return rng.child("shuffle").shuffle(a + b)


def linear_probe_accuracy(
    features: np.ndarray, labels: Sequence[int], train_fraction: float, rng: SeededRng,
    ridge: float = 1e-3,
) -> float:
    """Held-out accuracy of a ridge least-squares linear classifier on +-1 targets."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float) * 2.0 - 1.0
    idx = rng.permutation(len(y))
    cut = int(round(train_fraction * len(y)))
    tr, te = idx[:cut], idx[cut:]
    if tr.size == 0 or te.size == 0:
        raise ValueError("train_fraction leaves an empty split")
    design = np.column_stack([x[tr], np.ones(tr.size)])
    w = np.linalg.solve(design.T @ design + ridge * np.eye(design.shape[1]), design.T @ y[tr])
    pred = np.column_stack([x[te], np.ones(te.size)]) @ w
    return float(np.mean(np.sign(pred) == y[te]))
