import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainnetgen.graphs import (
    GraphSequence,
    LabeledGraph,
    NodeOrdering,
    bfs_ordering,
    estimate_lookback,
    graph_to_sequence,
    ordering_bandwidth,
    sequence_to_graph,
)
from brainnetgen.rng import SeededRng
from conftest import er_graph


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return LabeledGraph(n, frozenset(chosen))


def path_graph(n):
    return LabeledGraph(n, frozenset((i, i + 1) for i in range(n - 1)))


def star_graph(n):
    return LabeledGraph(n, frozenset((0, i) for i in range(1, n)))


def test_labeled_graph_normalizes_edges():
    g = LabeledGraph(3, frozenset({(2, 0), (1, 2)}))
    assert g.edges == frozenset({(0, 2), (1, 2)})
    assert g.adjacency().tolist() == [[0, 0, 1], [0, 0, 1], [1, 1, 0]]


@pytest.mark.parametrize("edges", [{(0, 0)}, {(0, 3)}])
def test_labeled_graph_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        LabeledGraph(3, frozenset(edges))


def test_labeled_graph_rejects_unknown_label():
    with pytest.raises(ValueError):
        LabeledGraph(2, label="asd")


def test_sequence_shape_for_triangle():
    g = LabeledGraph(3, frozenset({(0, 1), (0, 2), (1, 2)}))
    seq = graph_to_sequence(g, NodeOrdering.identity(3))
    assert [v.tolist() for v in seq.vectors] == [[], [1], [1, 1]]


def test_sequence_is_oldest_first_and_truncated():
    # edges 0-3 and 2-3; with lookback 2 node 3 only sees nodes 1, 2
    g = LabeledGraph(4, frozenset({(0, 3), (2, 3)}))
    full = graph_to_sequence(g, NodeOrdering.identity(4))
    assert full.vectors[3].tolist() == [1, 0, 1]
    short = graph_to_sequence(g, NodeOrdering.identity(4), lookback=2)
    assert short.vectors[3].tolist() == [0, 1]


def test_sequence_length_validation():
    with pytest.raises(ValueError):
        GraphSequence(2, (np.zeros(0), np.zeros(2)))


@given(graphs(), st.integers(0, 2**32))
@settings(max_examples=150, deadline=None)
def test_roundtrip_any_bfs_ordering(g, seed):
    rng = SeededRng(seed)
    order = bfs_ordering(g, int(rng.integers(g.n)), rng)
    back = sequence_to_graph(graph_to_sequence(g, order))
    perm = order.perm
    # back lives in position space; map positions to original node ids
    mapped = {(min(perm[i], perm[j]), max(perm[i], perm[j])) for i, j in back.edges}
    assert mapped == set(g.edges)


@given(graphs(), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_bfs_bandwidth_bound_is_lossless(g, seed):
    rng = SeededRng(seed)
    order = bfs_ordering(g, 0, rng)
    m = max(ordering_bandwidth(g, order), 1)
    seq = graph_to_sequence(g, order, lookback=m)
    full = graph_to_sequence(g, order)
    assert sequence_to_graph(seq).edges == sequence_to_graph(full).edges


@given(graphs(), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_bfs_is_permutation_and_deterministic(g, seed):
    a = bfs_ordering(g, 0, SeededRng(seed))
    b = bfs_ordering(g, 0, SeededRng(seed))
    assert a == b
    assert sorted(a.perm) == list(range(g.n))
    assert a.perm[0] == 0


def test_bfs_visits_by_level():
    g = LabeledGraph(5, frozenset({(0, 1), (0, 2), (1, 3), (2, 4)}))
    order = bfs_ordering(g, 0, SeededRng(1)).perm
    assert set(order[1:3]) == {1, 2}
    assert set(order[3:]) == {3, 4}


def test_bfs_disconnected_restarts_at_lowest_unvisited():
    g = LabeledGraph(5, frozenset({(3, 4)}))
    assert bfs_ordering(g, 3, SeededRng(0)).perm == (3, 4, 0, 1, 2)


def test_path_and_star_lookback():
    assert ordering_bandwidth(path_graph(8), NodeOrdering.identity(8)) == 1
    # BFS from the hub puts all leaves right after it; the last leaf sits n-1 away
    star = star_graph(7)
    assert ordering_bandwidth(star, bfs_ordering(star, 0, SeededRng(0))) == 6
    path = path_graph(8)
    assert ordering_bandwidth(path, bfs_ordering(path, 0, SeededRng(0))) == 1
    # from an interior node BFS alternates between both directions
    assert ordering_bandwidth(path, bfs_ordering(path, 4, SeededRng(0))) == 2
    assert estimate_lookback([path], 20, SeededRng(0), margin=1) == 3


def test_roundtrip_er_corpus():
    rng = np.random.default_rng(7)
    srng = SeededRng(7)
    for _ in range(200):
        g = er_graph(int(rng.integers(1, 31)), float(rng.choice([0.1, 0.5, 0.9])), rng)
        order = bfs_ordering(g, int(srng.integers(g.n)), srng)
        inv = np.argsort(order.perm)
        back = sequence_to_graph(graph_to_sequence(g, order))
        restored = {tuple(sorted((order.perm[i], order.perm[j]))) for i, j in back.edges}
        assert restored == set(g.edges)
        assert len(inv) == g.n


def test_star_bfs_from_center_and_path_order():
    star = star_graph(6)
    perm = bfs_ordering(star, 0, SeededRng(3)).perm
    assert perm[0] == 0 and sorted(perm[1:]) == [1, 2, 3, 4, 5]
    assert bfs_ordering(path_graph(3), 0, SeededRng(9)).perm == (0, 1, 2)


def test_star_lookback_is_not_one():
    # every leaf links back to the hub, so the last leaf needs a reach of n-1
    assert estimate_lookback([star_graph(6)], 10, SeededRng(0)) >= 4
