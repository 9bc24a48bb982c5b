"""Residual two-class classifier over connectomes and the augmentation protocol.

Autism is the positive class (label 1); control is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import AUTISM, CONTROL, InputError, TrainingError
from .connectome import BinaryConnectome
from .graphs import LabeledGraph
from .kernels import (
    AdamState,
    MlpParams,
    adam_update,
    bce_loss,
    clip_grad_norm,
    mlp_backward,
    mlp_forward,
)
from .rng import SeededRng, child_seed

ARMS = ("raw", "generated", "mixed")


class ClassifierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input_dim: int | None = Field(None, ge=1)
    width: int = Field(64, ge=1)
    blocks: int = Field(2, ge=1)
    epochs: int = Field(40, ge=0)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, gt=0)
    grad_clip: float = Field(5.0, ge=0)
    seed: int = 0


def featurize(g: BinaryConnectome | LabeledGraph) -> np.ndarray:
    """Strict upper triangle of the adjacency matrix, row-major."""
    adj = g.adjacency() if isinstance(g, LabeledGraph) else g.adjacency | g.adjacency.T
    return adj[np.triu_indices(adj.shape[0], k=1)].astype(float)


def label_value(label: str) -> int:
    if label == AUTISM:
        return 1
    if label == CONTROL:
        return 0
    raise InputError(f"graph label {label!r} is not autism/control")


def featurize_cohort(graphs: Sequence[BinaryConnectome | LabeledGraph]) -> tuple[np.ndarray, np.ndarray]:
    sizes = {g.n for g in graphs}
    if len(sizes) != 1:
        raise InputError(f"all graphs must share one node count, got {sorted(sizes)}")
    x = np.array([featurize(g) for g in graphs])
    y = np.array([label_value(g.label) for g in graphs], dtype=float)
    return x, y


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class ClassifierParams:
    proj: MlpParams
    blocks: list[MlpParams]
    out: MlpParams

    @classmethod
    def init(cls, config: ClassifierConfig, input_dim: int, rng: SeededRng) -> "ClassifierParams":
        w = config.width
        proj = MlpParams.init([input_dim, w], ["relu"], rng)
        blocks = [MlpParams.init([w, w, w], ["relu", "relu"], rng) for _ in range(config.blocks)]
        out = MlpParams.init([w, 1], ["sigmoid"], rng)
        return cls(proj, blocks, out)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"proj.{k}": v for k, v in self.proj.arrays().items()}
        for i, b in enumerate(self.blocks):
            out.update({f"block{i}.{k}": v for k, v in b.arrays().items()})
        out.update({f"out.{k}": v for k, v in self.out.arrays().items()})
        return out

    def zeros_like(self) -> "ClassifierParams":
        return ClassifierParams(
            self.proj.zeros_like(), [b.zeros_like() for b in self.blocks], self.out.zeros_like()
        )


def _forward(p: ClassifierParams, x: np.ndarray):
    h, c_proj = mlp_forward(p.proj, x)
    c_blocks = []
    for block in p.blocks:
        r, c = mlp_forward(block, h)
        h = h + r
        c_blocks.append(c)
    prob, c_out = mlp_forward(p.out, h)
    return prob[:, 0], (c_proj, c_blocks, c_out)


def _backward(p: ClassifierParams, caches, dprob: np.ndarray) -> ClassifierParams:
    c_proj, c_blocks, c_out = caches
    g = p.zeros_like()
    dh = mlp_backward(p.out, c_out, dprob[:, None], g.out)
    for i in range(len(p.blocks) - 1, -1, -1):
        dh = dh + mlp_backward(p.blocks[i], c_blocks[i], dh, g.blocks[i])
    mlp_backward(p.proj, c_proj, dh, g.proj)
    return g


def predict_proba(p: ClassifierParams, x: np.ndarray) -> np.ndarray:
    return _forward(p, np.asarray(x, dtype=float))[0]


def train_classifier(
    config: ClassifierConfig, x: np.ndarray, y: np.ndarray, rng: SeededRng | None = None
) -> tuple[ClassifierParams, list[float]]:
    """Minibatch Adam on mean binary cross-entropy; returns params and per-epoch mean loss."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y).tolist()) != {0.0, 1.0}:
        raise InputError("training set must contain both classes")
    if config.input_dim is not None and config.input_dim != x.shape[1]:
        raise InputError(f"input_dim {config.input_dim} does not match features ({x.shape[1]})")
    rng = rng if rng is not None else SeededRng(config.seed)
    params = ClassifierParams.init(config, x.shape[1], rng.child("init"))
    arrays = params.arrays()
    adam = AdamState(lr=config.lr)
    curve = []
    for epoch in range(config.epochs):
        order = rng.child(f"epoch{epoch}").permutation(len(y))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            prob, caches = _forward(params, x[idx])
            loss, dprob = bce_loss(prob, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"classifier loss became non-finite at epoch {epoch}")
            grads = _backward(params, caches, dprob).arrays()
            clip_grad_norm(grads, config.grad_clip)
            adam_update(adam, arrays, grads)
            total += loss * idx.size
        curve.append(total / len(y))
    return params, curve


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # [[tn, fp], [fn, tp]]
    roc_points: list[tuple[float, float, float]]  # (threshold, fpr, tpr)
    auc: float
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float, float]]:
    """ROC staircase from (0, 0) to (1, 1), one point per distinct score (positive iff score >= threshold)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("ROC needs both classes in the evaluation set")
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    tps = np.cumsum(lab)
    fps = np.cumsum(1 - lab)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    points = [(float("inf"), 0.0, 0.0)]
    points += [(float(s[i]), fps[i] / n_neg, tps[i] / n_pos) for i in last]
    return points


def auc_trapezoid(points: Sequence[tuple[float, float, float]]) -> float:
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def report_from_scores(scores: np.ndarray, labels: np.ndarray) -> EvalReport:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    pred = (scores >= 0.5).astype(int)
    confusion = np.zeros((2, 2), dtype=int)
    for t, p in zip(labels, pred):
        confusion[t, p] += 1
    points = roc_curve(scores, labels)
    return EvalReport(float(np.mean(pred == labels)), confusion, points, auc_trapezoid(points), scores)


def evaluate(params: ClassifierParams, x: np.ndarray, y: np.ndarray) -> EvalReport:
    return report_from_scores(predict_proba(params, x), y)


# ---------------------------------------------------------------------------
# Augmentation protocol
# ---------------------------------------------------------------------------


def stratified_split(y: np.ndarray, ratio: float, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; ``ratio`` of each class goes to training."""
    if not 0.0 < ratio < 1.0:
        raise InputError(f"ratio must lie in (0, 1), got {ratio}")
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(ratio * idx.size))
        if cut == 0 or cut == idx.size:
            raise InputError(f"ratio {ratio} leaves class {cls} empty in train or test split")
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass
class ProtocolResult:
    reports: dict[str, EvalReport]
    train_indices: np.ndarray
    test_indices: np.ndarray


def run_augmentation_protocol(
    raw: Sequence[BinaryConnectome | LabeledGraph],
    generated: Sequence[BinaryConnectome | LabeledGraph],
    config: ClassifierConfig,
    ratio: float,
    seed: int,
    arms: Sequence[str] = ARMS,
) -> ProtocolResult:
    """Train on raw-only, generated-only and mixed data; test every arm on the same raw hold-out."""
    if not raw or not generated:
        raise InputError("raw and generated cohorts must be non-empty")
    unknown = set(arms) - set(ARMS)
    if unknown:
        raise InputError(f"unknown arm(s): {sorted(unknown)}")
    x_raw, y_raw = featurize_cohort(raw)
    x_gen, y_gen = featurize_cohort(generated)
    if x_gen.shape[1] != x_raw.shape[1]:
        raise InputError("generated graphs must have the same node count as raw graphs")
    train_idx, test_idx = stratified_split(y_raw, ratio, SeededRng(child_seed(seed, "split")))
    x_tr, y_tr = x_raw[train_idx], y_raw[train_idx]
    x_te, y_te = x_raw[test_idx], y_raw[test_idx]
    reports = {}
    for arm in arms:
        arm_rng = SeededRng(child_seed(seed, f"arm:{arm}"))
        if arm == "raw":
            xa, ya = x_tr, y_tr
        elif arm == "generated":
            xa, ya = x_gen, y_gen
        else:
            perm = arm_rng.child("mix").permutation(len(y_tr) + len(y_gen))
            xa = np.vstack([x_tr, x_gen])[perm]
            ya = np.concatenate([y_tr, y_gen])[perm]
        params, _ = train_classifier(config, xa, ya, arm_rng)
        reports[arm] = evaluate(params, x_te, y_te)
    return ProtocolResult(reports, train_idx, test_idx)


def is_unstable_ratio(ratio: float) -> bool:
    """Training fractions near 0.1 or 0.9 give distorted validation."""
    return ratio <= 0.15 or ratio >= 0.85


def ratio_sweep(
    raw: Sequence[BinaryConnectome | LabeledGraph],
    generated: Sequence[BinaryConnectome | LabeledGraph],
    ratios: Sequence[float],
    config: ClassifierConfig,
    seed: int,
    arms: Sequence[str] = ARMS,
) -> list[tuple[float, str, float, bool]]:
    """Rows of (ratio, arm, accuracy, unstable) for each ratio and arm."""
    rows = []
    for ratio in ratios:
        res = run_augmentation_protocol(raw, generated, config, ratio, seed, arms)
        for arm in arms:
            rows.append((float(ratio), arm, res.reports[arm].accuracy, is_unstable_ratio(ratio)))
    return rows
