import hashlib

import numpy as np

from brainnetgen.rng import SeededRng, child_seed


def test_child_seed_matches_sha256_prefix():
    digest = hashlib.sha256(b"7:train").digest()
    assert child_seed(7, "train") == int.from_bytes(digest[:8], "big")


def test_child_seeds_differ_by_name_and_parent():
    seeds = {child_seed(s, n) for s in (0, 1) for n in ("a", "b", "c")}
    assert len(seeds) == 6


def test_same_seed_same_stream():
    a, b = SeededRng(42), SeededRng(42)
    assert np.array_equal(a.uniform(10), b.uniform(10))
    assert np.array_equal(a.child("x").normal(5), b.child("x").normal(5))


def test_shuffle_returns_copy():
    items = list(range(10))
    out = SeededRng(1).shuffle(items)
    assert items == list(range(10))
    assert sorted(out) == items


def test_glorot_bounds():
    w = SeededRng(0).glorot(20, 30)
    limit = np.sqrt(6.0 / 50)
    assert w.shape == (20, 30)
    assert np.all(np.abs(w) <= limit)
