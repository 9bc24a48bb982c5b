"""Graph statistics, degree-distribution MMD and a 2-D PCA embedding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import LabeledGraph


@dataclass
class GraphStats:
    degree_histogram: np.ndarray
    avg_clustering: float
    edge_count: int
    density: float


def degree_histogram(g: LabeledGraph) -> np.ndarray:
    """Fraction of nodes at each degree 0..n-1."""
    if g.n == 0:
        return np.zeros(0)
    counts = np.bincount(g.degrees(), minlength=g.n).astype(float)
    return counts / g.n


def avg_clustering(g: LabeledGraph) -> float:
    if g.n == 0:
        return 0.0
    a = g.adjacency().astype(float)
    deg = a.sum(axis=1)
    tri2 = ((a @ a) * a).sum(axis=1)  # 2 * triangles through each node
    wedges = deg * (deg - 1)
    local = np.divide(tri2, wedges, out=np.zeros_like(tri2), where=deg >= 2)
    return float(local.mean())


def graph_stats(g: LabeledGraph) -> GraphStats:
    possible = g.n * (g.n - 1) / 2
    return GraphStats(
        degree_histogram(g),
        avg_clustering(g),
        g.edge_count,
        g.edge_count / possible if possible else 0.0,
    )


def _padded_histograms(graphs: Sequence[LabeledGraph], width: int) -> np.ndarray:
    out = np.zeros((len(graphs), width))
    for r, g in enumerate(graphs):
        h = degree_histogram(g)
        out[r, : h.size] = h
    return out


def mmd_degree(
    set_a: Sequence[LabeledGraph], set_b: Sequence[LabeledGraph], sigma: float = 1.0
) -> float:
    """Biased squared MMD between degree histograms under a Gaussian kernel."""
    if not set_a or not set_b:
        raise ValueError("both graph sets must be non-empty")
    width = max(max(g.n for g in set_a), max(g.n for g in set_b), 1)
    x = _padded_histograms(set_a, width)
    y = _padded_histograms(set_b, width)

    def kernel_mean(u, v):
        d2 = ((u[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        return float(np.exp(-d2 / (2.0 * sigma**2)).mean())

    return kernel_mean(x, x) + kernel_mean(y, y) - 2.0 * kernel_mean(x, y)


def _power_iteration(cov: np.ndarray, tol: float, max_iter: int, start: np.ndarray):
    v = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        if w[np.argmax(np.abs(w))] < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    return float(v @ cov @ v), v


def pca_embed_2d(
    features: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[np.ndarray, tuple[float, float]]:
    """Project onto the top two principal directions.

    Directions come from power iteration with deflation on the sample
    covariance. Returns the ``(N, 2)`` projections and the two component
    variances.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two rows")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    start = np.random.default_rng(0).standard_normal(cov.shape[0])
    lam1, v1 = _power_iteration(cov, tol, max_iter, start)
    deflated = cov - lam1 * np.outer(v1, v1)
    start2 = start - (start @ v1) * v1
    if np.linalg.norm(start2) == 0.0:
        start2 = np.ones_like(start)
    lam2, v2 = _power_iteration(deflated, tol, max_iter, start2)
    basis = np.column_stack([v1, v2])
    return centered @ basis, (lam1, max(lam2, 0.0))
