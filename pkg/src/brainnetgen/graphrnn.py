"""Autoregressive graph generator over BFS-ordered adjacency vectors.

A graph-level GRU consumes one adjacency vector per node and, from its hidden
state, an edge head emits the connection probabilities of the next node to its
predecessors. Two heads are available:

* ``edge_rnn`` - a second GRU, initialised from the graph state, emits one
  bit at a time, each conditioned on the bits before it;
* ``mlp_head`` - an MLP emits all bits of the next vector independently.

Internally vectors are stored nearest-predecessor first in ``M`` fixed slots
(``M`` = lookback, or ``max_nodes - 1`` when unbounded), so slot ``k`` always
means "the node ``k + 1`` positions back". Public functions convert to and from
the oldest-first layout used by :mod:`brainnetgen.graphs`.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import LABELS, UNLABELED, InputError, TrainingError
from .graphs import (
    GraphSequence,
    LabeledGraph,
    NodeOrdering,
    bfs_ordering,
    sequence_to_graph,
)
from .kernels import (
    AdamState,
    GruCellParams,
    MlpParams,
    adam_update,
    bce_loss,
    clip_grad_norm,
    gru_step,
    gru_step_backward,
    mlp_backward,
    mlp_forward,
)
from .rng import SeededRng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class GraphRnnConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Literal["edge_rnn", "mlp_head"] = "edge_rnn"
    graph_hidden_dim: int = Field(64, ge=1)
    edge_hidden_dim: int = Field(16, ge=1)
    embed_dim: int = Field(32, ge=1)
    head_hidden_dim: int = Field(64, ge=1)
    lookback: int | None = Field(None, ge=1)
    max_nodes: int = Field(30, ge=2)
    generation_mode: Literal["fixed_n", "eos"] = "fixed_n"
    fixed_n: int | None = Field(None, ge=2)
    ordering: Literal["bfs", "identity"] = "bfs"
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, gt=0)
    seed: int = 0
    grad_clip: float = Field(5.0, ge=0)
    max_seconds: float | None = Field(None, gt=0)
    min_edge_density: float = Field(0.01, ge=0, le=1)
    max_edge_density: float = Field(0.99, ge=0, le=1)

    @model_validator(mode="after")
    def _check(self):
        if self.fixed_n is not None and self.fixed_n > self.max_nodes:
            raise ValueError("fixed_n must not exceed max_nodes")
        if self.min_edge_density > self.max_edge_density:
            raise ValueError("min_edge_density exceeds max_edge_density")
        return self

    @property
    def slots(self) -> int:
        return self.lookback if self.lookback is not None else self.max_nodes - 1

    @property
    def target_nodes(self) -> int:
        return self.fixed_n if self.fixed_n is not None else self.max_nodes


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class GraphRnnParams:
    embed: MlpParams
    graph_gru: GruCellParams
    h0: np.ndarray
    head: MlpParams | None = None
    edge_init: MlpParams | None = None
    edge_gru: GruCellParams | None = None
    edge_out: MlpParams | None = None

    @classmethod
    def init(cls, config: GraphRnnConfig, rng: SeededRng | None) -> "GraphRnnParams":
        """Glorot weights with zero biases; ``rng=None`` gives the all-zero model."""
        c = config
        m = c.slots
        embed = MlpParams.init([m + 1, c.embed_dim], ["relu"], rng)
        if rng is None:
            gru = GruCellParams.zeros(c.embed_dim, c.graph_hidden_dim)
        else:
            gru = GruCellParams.init(c.embed_dim, c.graph_hidden_dim, rng)
        p = cls(embed, gru, np.zeros(c.graph_hidden_dim))
        if c.variant == "mlp_head":
            p.head = MlpParams.init(
                [c.graph_hidden_dim, c.head_hidden_dim, m], ["relu", "sigmoid"], rng
            )
        else:
            p.edge_init = MlpParams.init([c.graph_hidden_dim, c.edge_hidden_dim], ["identity"], rng)
            if rng is None:
                p.edge_gru = GruCellParams.zeros(2, c.edge_hidden_dim)
            else:
                p.edge_gru = GruCellParams.init(2, c.edge_hidden_dim, rng)
            p.edge_out = MlpParams.init(
                [c.edge_hidden_dim, c.edge_hidden_dim, 1], ["relu", "sigmoid"], rng
            )
        return p

    def parts(self) -> dict[str, object]:
        names = ("embed", "graph_gru", "head", "edge_init", "edge_gru", "edge_out")
        return {k: getattr(self, k) for k in names if getattr(self, k) is not None}

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"h0": self.h0}
        for prefix, part in self.parts().items():
            for k, a in part.arrays().items():
                out[f"{prefix}.{k}"] = a
        return out

    def zeros_like(self) -> "GraphRnnParams":
        kw = {k: v.zeros_like() for k, v in self.parts().items()}
        return GraphRnnParams(h0=np.zeros_like(self.h0), **kw)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    inputs: np.ndarray  # (B, T, M + 1): slot bits + start flag
    targets: np.ndarray  # (B, T, M)
    mask: np.ndarray  # (B, T, M)

    @property
    def bits(self) -> int:
        return int(self.mask.sum())


def _reversed_slots(adj_perm: np.ndarray, m: int) -> np.ndarray:
    """Row ``i``: edges from position ``i`` to positions ``i-1, i-2, ...`` (at most ``m``)."""
    n = adj_perm.shape[0]
    i = np.arange(n)[:, None]
    k = np.arange(m)[None, :]
    col = i - 1 - k
    valid = col >= 0
    out = np.zeros((n, m), dtype=float)
    out[valid] = adj_perm[np.broadcast_to(i, col.shape)[valid], col[valid]]
    return out


def sequence_slots(seq: GraphSequence, m: int) -> np.ndarray:
    """Convert a :class:`GraphSequence` to the ``(n, m)`` nearest-first slot layout."""
    out = np.zeros((seq.n, m))
    for i, v in enumerate(seq.vectors):
        length = min(v.size, m)
        if length:
            out[i, :length] = v[::-1][:length]
    return out


def encode_batch(slot_rows: Sequence[np.ndarray], config: GraphRnnConfig) -> Batch:
    """Stack per-graph slot matrices into padded teacher-forcing arrays.

    Graph with ``n`` nodes contributes targets for vectors 2..n, plus an all-zero
    end-of-sequence target in ``eos`` mode when ``n < max_nodes``.
    """
    m = config.slots
    eos = config.generation_mode == "eos"
    steps = []
    for rows in slot_rows:
        n = rows.shape[0]
        steps.append(n if (eos and n < config.max_nodes) else n - 1)
    t_max = max(max(steps), 1)
    b = len(slot_rows)
    inputs = np.zeros((b, t_max, m + 1))
    targets = np.zeros((b, t_max, m))
    mask = np.zeros((b, t_max, m))
    inputs[:, 0, m] = 1.0
    lengths = np.minimum(np.arange(1, t_max + 1), m)
    for g, (rows, t_g) in enumerate(zip(slot_rows, steps)):
        n = rows.shape[0]
        inputs[g, 1:min(t_g, n), :m] = rows[1:min(t_g, n)]
        n_targets = min(t_g, n - 1)
        targets[g, :n_targets] = rows[1 : n_targets + 1]
        for t in range(t_g):
            mask[g, t, : lengths[t]] = 1.0
    return Batch(inputs, targets, mask)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _run_graph_level(params: GraphRnnParams, inputs: np.ndarray):
    b, t_max, _ = inputs.shape
    h = np.tile(params.h0, (b, 1))
    hs = np.zeros((b, t_max, params.h0.size))
    caches = []
    for t in range(t_max):
        e, ce = mlp_forward(params.embed, inputs[:, t])
        h, cg = gru_step(params.graph_gru, h, e)
        hs[:, t] = h
        caches.append((ce, cg))
    return hs, caches


def _edge_inputs(prev_bits: np.ndarray | None, rows: int) -> np.ndarray:
    x = np.zeros((rows, 2))
    if prev_bits is None:
        x[:, 1] = 1.0
    else:
        x[:, 0] = prev_bits
    return x


def _loss_and_grads(params: GraphRnnParams, batch: Batch, want_grads: bool = True):
    """Teacher-forced mean BCE over all masked bits, and its gradient."""
    hs, g_caches = _run_graph_level(params, batch.inputs)
    b, t_max, hg = hs.shape
    m = batch.mask.shape[2]
    row_mask = batch.mask.reshape(b * t_max, m)
    idx = np.flatnonzero(row_mask.any(axis=1))
    h_rows = hs.reshape(b * t_max, hg)[idx]
    y = batch.targets.reshape(b * t_max, m)[idx]
    w = row_mask[idx]
    k_max = int(w.sum(axis=1).max())

    if params.head is not None:
        probs, c_head = mlp_forward(params.head, h_rows)
        loss, dp = bce_loss(probs[:, :k_max], y[:, :k_max], w[:, :k_max])
    else:
        e, c_init = mlp_forward(params.edge_init, h_rows)
        probs = np.zeros((idx.size, m))
        e_caches = []
        for k in range(k_max):
            x = _edge_inputs(None if k == 0 else y[:, k - 1], idx.size)
            e, cg = gru_step(params.edge_gru, e, x)
            p, co = mlp_forward(params.edge_out, e)
            probs[:, k] = p[:, 0]
            e_caches.append((cg, co))
        loss, dp = bce_loss(probs[:, :k_max], y[:, :k_max], w[:, :k_max])

    if not want_grads:
        return loss, None, probs, idx

    grads = params.zeros_like()
    if params.head is not None:
        dfull = np.zeros_like(probs)
        dfull[:, :k_max] = dp
        dh_rows = mlp_backward(params.head, c_head, dfull, grads.head)
    else:
        de = np.zeros((idx.size, params.edge_gru.hidden_dim))
        for k in range(k_max - 1, -1, -1):
            cg, co = e_caches[k]
            de = de + mlp_backward(params.edge_out, co, dp[:, k : k + 1], grads.edge_out)
            de, _ = gru_step_backward(params.edge_gru, cg, de, grads.edge_gru)
        dh_rows = mlp_backward(params.edge_init, c_init, de, grads.edge_init)

    dhs = np.zeros((b * t_max, hg))
    dhs[idx] = dh_rows
    dhs = dhs.reshape(b, t_max, hg)
    dh = np.zeros((b, hg))
    for t in range(t_max - 1, -1, -1):
        ce, cg = g_caches[t]
        dh, de = gru_step_backward(params.graph_gru, cg, dhs[:, t] + dh, grads.graph_gru)
        mlp_backward(params.embed, ce, de, grads.embed)
    grads.h0 += dh.sum(axis=0)
    return loss, grads, probs, idx


def batch_loss(params: GraphRnnParams, batch: Batch) -> float:
    return _loss_and_grads(params, batch, want_grads=False)[0]


def loss_and_grads(params: GraphRnnParams, batch: Batch) -> tuple[float, GraphRnnParams]:
    loss, grads, _, _ = _loss_and_grads(params, batch)
    return loss, grads


def forward_teacher_forced(
    params: GraphRnnParams, seq: GraphSequence, config: GraphRnnConfig
) -> list[np.ndarray]:
    """Edge probabilities for vectors 2..n in the oldest-first layout (length ``min(i, M)`` each)."""
    if seq.n > config.max_nodes:
        raise ValueError(f"sequence has {seq.n} nodes, model supports {config.max_nodes}")
    if seq.lookback is not None and config.lookback is not None and seq.lookback > config.lookback:
        raise ValueError("sequence lookback exceeds the model's")
    fixed = config.model_copy(update={"generation_mode": "fixed_n"})
    batch = encode_batch([sequence_slots(seq, config.slots)], fixed)
    _, _, probs, idx = _loss_and_grads(params, batch, want_grads=False)
    out = []
    for r, t in enumerate(idx):
        length = min(int(t) + 1, config.slots)
        out.append(probs[r, :length][::-1].copy())
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: GraphRnnConfig
    params: GraphRnnParams
    metadata: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.metadata.get("label", UNLABELED)


class _Encoder:
    """Caches adjacency and neighbour lists so per-epoch re-encoding is cheap."""

    def __init__(self, graphs: Sequence[LabeledGraph], config: GraphRnnConfig):
        self.graphs = list(graphs)
        self.adj = [g.adjacency() for g in self.graphs]
        self.config = config

    def encode(self, j: int, rng: SeededRng) -> np.ndarray:
        g = self.graphs[j]
        if self.config.ordering == "bfs":
            order = bfs_ordering(g, int(rng.integers(g.n)), rng).perm
        else:
            order = NodeOrdering.identity(g.n).perm
        perm = np.array(order)
        return _reversed_slots(self.adj[j][np.ix_(perm, perm)], self.config.slots)


def _cohort_label(graphs: Sequence[LabeledGraph]) -> str:
    labels = {g.label for g in graphs}
    return labels.pop() if len(labels) == 1 else UNLABELED


def train(
    config: GraphRnnConfig,
    cohort: Sequence[LabeledGraph],
    rng: SeededRng | None = None,
    init: GraphRnnParams | None = None,
) -> tuple[Checkpoint, list[float]]:
    """Fit the generator by teacher forcing; returns the checkpoint and per-epoch mean loss."""
    if not cohort:
        raise InputError("training cohort is empty")
    too_big = [g.n for g in cohort if g.n > config.max_nodes or g.n < 2]
    if too_big:
        raise InputError(f"graph sizes must lie in [2, {config.max_nodes}], got {too_big[0]}")
    rng = rng if rng is not None else SeededRng(config.seed)
    params = init if init is not None else GraphRnnParams.init(config, rng.child("init"))
    arrays = params.arrays()
    adam = AdamState(lr=config.lr)
    enc = _Encoder(cohort, config)
    curve: list[float] = []
    started = time.monotonic()
    for epoch in range(config.epochs):
        erng = rng.child(f"epoch{epoch}")
        order = erng.permutation(len(cohort))
        total, bits = 0.0, 0
        for s in range(0, len(order), config.batch_size):
            rows = [enc.encode(int(j), erng) for j in order[s : s + config.batch_size]]
            batch = encode_batch(rows, config)
            loss, grads = loss_and_grads(params, batch)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {s}")
            g_arrays = grads.arrays()
            clip_grad_norm(g_arrays, config.grad_clip)
            adam_update(adam, arrays, g_arrays)
            total += loss * batch.bits
            bits += batch.bits
        curve.append(total / bits)
        log.debug("epoch %d loss %.6f", epoch, curve[-1])
        if config.max_seconds is not None and time.monotonic() - started > config.max_seconds:
            log.info("time budget reached after %d epochs", epoch + 1)
            break
    meta = {
        "epochs": len(curve),
        "final_loss": curve[-1] if curve else None,
        "seed": rng.seed,
        "grad_clip": config.grad_clip,
        "label": _cohort_label(cohort),
        "train_size": len(cohort),
    }
    return Checkpoint(config, params, meta), curve


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _sample_slots(cp: Checkpoint, count: int, rng: SeededRng) -> list[np.ndarray]:
    config, params = cp.config, cp.params
    m = config.slots
    eos = config.generation_mode == "eos"
    target = config.max_nodes if eos else config.target_nodes
    x = np.zeros((count, m + 1))
    x[:, m] = 1.0
    h = np.tile(params.h0, (count, 1))
    alive = np.ones(count, dtype=bool)
    rows: list[list[np.ndarray]] = [[np.zeros(m)] for _ in range(count)]
    for i in range(1, target):
        length = min(i, m)
        e, _ = mlp_forward(params.embed, x)
        h, _ = gru_step(params.graph_gru, h, e)
        bits = np.zeros((count, m))
        if params.head is not None:
            p, _ = mlp_forward(params.head, h)
            u = rng.uniform((count, m))
            bits[:, :length] = u[:, :length] < p[:, :length]
        else:
            eh, _ = mlp_forward(params.edge_init, h)
            prev = None
            for k in range(length):
                eh, _ = gru_step(params.edge_gru, eh, _edge_inputs(prev, count))
                p, _ = mlp_forward(params.edge_out, eh)
                prev = (rng.uniform(count) < p[:, 0]).astype(float)
                bits[:, k] = prev
        keep = alive.copy()
        if eos:
            stop = alive & (bits[:, :length].sum(axis=1) == 0)
            if i > 1:
                keep &= ~stop  # the zero vector is the stop token; graphs never drop below 2 nodes
            alive &= ~stop
        for s in np.flatnonzero(keep):
            rows[s].append(bits[s])
        if not alive.any():
            break
        x = np.zeros((count, m + 1))
        x[:, :m] = bits
    return [np.array(r) for r in rows]


def _slots_to_graph(rows: np.ndarray, config: GraphRnnConfig, label: str) -> LabeledGraph:
    m = config.slots
    vectors = []
    for i in range(1, rows.shape[0] + 1):
        length = min(i - 1, m)
        vectors.append(rows[i - 1, :length][::-1].astype(np.uint8))
    return sequence_to_graph(GraphSequence(rows.shape[0], tuple(vectors), label, config.lookback))


def sample(cp: Checkpoint, count: int, rng: SeededRng) -> list[LabeledGraph]:
    """Draw ``count`` graphs autoregressively; labels come from the checkpoint."""
    if count < 1:
        raise InputError("count must be at least 1")
    label = cp.label if cp.label in LABELS else UNLABELED
    return [_slots_to_graph(r, cp.config, label) for r in _sample_slots(cp, count, rng)]


@dataclass
class SampleReport:
    graphs: list[LabeledGraph]
    drawn: int
    rejected: int

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.drawn if self.drawn else 0.0


def is_degenerate(g: LabeledGraph, min_density: float, max_density: float) -> bool:
    possible = g.n * (g.n - 1) / 2
    density = g.edge_count / possible if possible else 0.0
    return density < min_density or density > max_density


def sample_accepted(
    cp: Checkpoint, count: int, rng: SeededRng, max_rounds: int = 50
) -> SampleReport:
    """Sample until ``count`` graphs pass the edge-density rejection rule."""
    lo, hi = cp.config.min_edge_density, cp.config.max_edge_density
    accepted: list[LabeledGraph] = []
    drawn = rejected = 0
    for r in range(max_rounds):
        need = count - len(accepted)
        if need <= 0:
            break
        batch = sample(cp, need, rng.child(f"round{r}"))
        drawn += len(batch)
        for g in batch:
            if is_degenerate(g, lo, hi):
                rejected += 1
            else:
                accepted.append(g)
    if len(accepted) < count:
        raise TrainingError(
            f"only {len(accepted)} of {count} samples passed the density filter "
            f"[{lo}, {hi}] after {drawn} draws"
        )
    return SampleReport(accepted, drawn, rejected)


# ---------------------------------------------------------------------------
# Checkpoint files
# ---------------------------------------------------------------------------


class CheckpointError(InputError):
    pass


def save_checkpoint(cp: Checkpoint, path: str | Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": cp.config.model_dump(),
        "params": {k: v.tolist() for k, v in sorted(cp.params.arrays().items())},
        "metadata": cp.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"{path}: checkpoint not found")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})")
    if not isinstance(doc, dict) or set(doc) != {"format_version", "config", "params", "metadata"}:
        raise CheckpointError(f"{path}: checkpoint must have keys format_version, config, params, metadata")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {doc['format_version']!r}, expected {FORMAT_VERSION}"
        )
    try:
        config = GraphRnnConfig.model_validate(doc["config"])
    except Exception as exc:
        raise CheckpointError(f"{path}: bad config ({exc})")
    params = GraphRnnParams.init(config, None)
    arrays = params.arrays()
    stored = doc["params"]
    if set(stored) != set(arrays):
        raise CheckpointError(f"{path}: parameter names do not match the config")
    for name, target in arrays.items():
        value = np.array(stored[name], dtype=float)
        if value.shape != target.shape:
            raise CheckpointError(f"{path}: {name} has shape {value.shape}, expected {target.shape}")
        if not np.all(np.isfinite(value)):
            raise CheckpointError(f"{path}: {name} contains non-finite values")
        target[...] = value
    return Checkpoint(config, params, dict(doc["metadata"]))
