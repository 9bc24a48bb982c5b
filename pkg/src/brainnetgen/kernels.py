"""Numeric core: GRU cell, MLP, binary cross-entropy, Adam, gradient checks.

All kernels operate on batches of row vectors, shape ``(batch, dim)``; a single
vector is the ``batch == 1`` case. Weight matrices are stored ``(out, in)`` and
applied as ``x @ W.T``. Every forward returns a cache consumed by the matching
backward, and every backward returns gradients in the same container type as
the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import TrainingError
from .rng import SeededRng

PROB_CLIP = 1e-7
ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


def sigmoid(a: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(a, dtype=float)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------

GRU_FIELDS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


@dataclass
class GruCellParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        hid, inp = self.W_z.shape
        for name in ("W_r", "W_h"):
            if getattr(self, name).shape != (hid, inp):
                raise ValueError(f"{name} must have shape {(hid, inp)}")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (hid, hid):
                raise ValueError(f"{name} must have shape {(hid, hid)}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (hid,):
                raise ValueError(f"{name} must have shape {(hid,)}")

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruCellParams":
        w = lambda r, c: np.zeros((r, c))
        return cls(
            w(hidden_dim, input_dim), w(hidden_dim, input_dim), w(hidden_dim, input_dim),
            w(hidden_dim, hidden_dim), w(hidden_dim, hidden_dim), w(hidden_dim, hidden_dim),
            np.zeros(hidden_dim), np.zeros(hidden_dim), np.zeros(hidden_dim),
        )

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: SeededRng) -> "GruCellParams":
        p = cls.zeros(input_dim, hidden_dim)
        for name in ("W_z", "W_r", "W_h"):
            setattr(p, name, rng.glorot(hidden_dim, input_dim))
        for name in ("U_z", "U_r", "U_h"):
            setattr(p, name, rng.glorot(hidden_dim, hidden_dim))
        return p

    def arrays(self) -> dict[str, np.ndarray]:
        return {f: getattr(self, f) for f in GRU_FIELDS}

    def zeros_like(self) -> "GruCellParams":
        return GruCellParams(**{f: np.zeros_like(a) for f, a in self.arrays().items()})


@dataclass
class GruCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_tilde: np.ndarray


def gru_step(p: GruCellParams, h_prev: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, GruCache]:
    """One GRU transition; returns the new hidden state and a backward cache."""
    h_prev = _as_batch(h_prev)
    x = _as_batch(x)
    if x.shape[1] != p.input_dim or h_prev.shape[1] != p.hidden_dim:
        raise ValueError(
            f"gru_step expects x (*, {p.input_dim}) and h (*, {p.hidden_dim}), "
            f"got {x.shape} and {h_prev.shape}"
        )
    z = sigmoid(x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = sigmoid(x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    h_tilde = np.tanh(x @ p.W_h.T + (r * h_prev) @ p.U_h.T + p.b_h)
    h_new = (1.0 - z) * h_prev + z * h_tilde
    return h_new, GruCache(x, h_prev, z, r, h_tilde)


def gru_step_backward(
    p: GruCellParams, cache: GruCache, dh_new: np.ndarray, grads: GruCellParams
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate parameter gradients into ``grads``; return (dh_prev, dx)."""
    x, h, z, r, ht = cache.x, cache.h_prev, cache.z, cache.r, cache.h_tilde
    dz = dh_new * (ht - h)
    dht = dh_new * z
    dh = dh_new * (1.0 - z)

    da_h = dht * (1.0 - ht * ht)
    rh = r * h
    grads.W_h += da_h.T @ x
    grads.U_h += da_h.T @ rh
    grads.b_h += da_h.sum(axis=0)
    dx = da_h @ p.W_h
    drh = da_h @ p.U_h
    dr = drh * h
    dh += drh * r

    da_z = dz * z * (1.0 - z)
    grads.W_z += da_z.T @ x
    grads.U_z += da_z.T @ h
    grads.b_z += da_z.sum(axis=0)
    dx += da_z @ p.W_z
    dh += da_z @ p.U_z

    da_r = dr * r * (1.0 - r)
    grads.W_r += da_r.T @ x
    grads.U_r += da_r.T @ h
    grads.b_r += da_r.sum(axis=0)
    dx += da_r @ p.W_r
    dh += da_r @ p.U_r
    return dh, dx


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.b.shape != (self.W.shape[0],):
            raise ValueError("bias length must equal output width")


@dataclass
class MlpParams:
    layers: list[Dense] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.W.shape[0] != b.W.shape[1]:
                raise ValueError("consecutive layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    @classmethod
    def init(
        cls, dims: list[int], activations: list[str], rng: SeededRng | None
    ) -> "MlpParams":
        """Glorot-uniform weights and zero biases; ``rng=None`` gives all zeros."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for d_in, d_out, act in zip(dims, dims[1:], activations):
            W = rng.glorot(d_out, d_in) if rng is not None else np.zeros((d_out, d_in))
            layers.append(Dense(W, np.zeros(d_out), act))
        return cls(layers)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.W"] = layer.W
            out[f"{i}.b"] = layer.b
        return out

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            [Dense(np.zeros_like(l.W), np.zeros_like(l.b), l.activation) for l in self.layers]
        )


def _activate(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "tanh":
        return np.tanh(a)
    return a


def _activation_grad(y: np.ndarray, dy: np.ndarray, kind: str) -> np.ndarray:
    # expressed in terms of the activation output y
    if kind == "relu":
        return dy * (y > 0)
    if kind == "sigmoid":
        return dy * y * (1.0 - y)
    if kind == "tanh":
        return dy * (1.0 - y * y)
    return dy


def mlp_forward(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Apply each affine+activation layer; the cache is the list of layer inputs and the output."""
    h = _as_batch(x)
    if h.shape[1] != p.input_dim:
        raise ValueError(f"mlp expects input width {p.input_dim}, got {h.shape[1]}")
    acts = [h]
    for layer in p.layers:
        h = _activate(h @ layer.W.T + layer.b, layer.activation)
        acts.append(h)
    return h, acts


def mlp_backward(
    p: MlpParams, cache: list[np.ndarray], dy: np.ndarray, grads: MlpParams
) -> np.ndarray:
    """Accumulate gradients into ``grads`` and return the gradient wrt the input."""
    d = _as_batch(dy)
    for i in range(len(p.layers) - 1, -1, -1):
        layer = p.layers[i]
        da = _activation_grad(cache[i + 1], d, layer.activation)
        grads.layers[i].W += da.T @ cache[i]
        grads.layers[i].b += da.sum(axis=0)
        d = da @ layer.W
    return d


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def bce_loss(
    y_pred: np.ndarray, y_true: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient wrt ``y_pred``.

    ``mask`` selects the entries that count; the mean is over selected entries.
    Predictions are clipped to ``[1e-7, 1 - 1e-7]``; the gradient is zero where
    the clip is active.
    """
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_pred.shape != y_true.shape:
        raise ValueError(f"shape mismatch: {y_pred.shape} vs {y_true.shape}")
    w = np.ones_like(y_pred) if mask is None else np.asarray(mask, dtype=float)
    n = w.sum()
    if y_pred.size == 0 or n == 0:
        raise ValueError("bce_loss needs at least one entry")
    p = np.clip(y_pred, PROB_CLIP, 1.0 - PROB_CLIP)
    terms = y_true * np.log(p) + (1.0 - y_true) * np.log1p(-p)
    loss = -float((w * terms).sum() / n)
    grad = -w * (y_true / p - (1.0 - y_true) / (1.0 - p)) / n
    inside = (y_pred >= PROB_CLIP) & (y_pred <= 1.0 - PROB_CLIP)
    return loss, np.where(inside, grad, 0.0)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; return the pre-clip norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> None:
    """Bias-corrected Adam step, applied in place to ``params`` arrays."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}")
        if params[name].shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name in sorted(grads):
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    point: np.ndarray,
    analytic: np.ndarray,
    h: float = 1e-5,
    coords: Iterable[int] | None = None,
) -> float:
    """Largest relative error between ``analytic`` and central differences of ``f``.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``. ``coords`` limits
    the check to selected flat indices.
    """
    x = np.array(point, dtype=float).ravel()
    analytic = np.asarray(analytic, dtype=float).ravel()
    idx = range(x.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        orig = x[i]
        x[i] = orig + h
        up = f(x)
        x[i] = orig - h
        down = f(x)
        x[i] = orig
        numeric = (up - down) / (2.0 * h)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def flatten(arrays: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([arrays[k].ravel() for k in sorted(arrays)])


def unflatten_into(arrays: dict[str, np.ndarray], flat: np.ndarray) -> None:
    """Write ``flat`` back into ``arrays`` (sorted-key order), in place."""
    pos = 0
    for k in sorted(arrays):
        a = arrays[k]
        a[...] = flat[pos : pos + a.size].reshape(a.shape)
        pos += a.size
