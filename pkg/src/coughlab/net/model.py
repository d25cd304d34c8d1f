"""Sequence classifier: stacked BiLSTM, dropout, sigmoid output layer.

Readout concatenates the last layer's final forward state (t = T-1) with its
final backward state (t = 0). Dropout follows every BiLSTM layer and is
inverted (kept units scaled by 1/(1-p)) so inference needs no rescaling.
"""
from __future__ import annotations

import numpy as np

from ..errors import NonFiniteInputError, ShapeError
from .lstm import bilstm_backward, bilstm_forward, sigmoid
from .params import NetworkConfig, NetworkParams

PROB_CLAMP = 1e-12


def _as_matrix(features) -> np.ndarray:
    frames = getattr(features, "frames", features)
    return np.asarray(frames, dtype=np.float64)


def _check_input(x: np.ndarray, cfg: NetworkConfig) -> None:
    if x.ndim != 3 or x.shape[1] < 1:
        raise ShapeError(f"expected (B, T>=1, D) input, got shape {x.shape}")
    if x.shape[2] != cfg.input_dim:
        raise ShapeError(f"feature dim {x.shape[2]} does not match network input_dim {cfg.input_dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("features contain NaN or Inf")


def dropout_masks(rng: np.random.Generator, cfg: NetworkConfig, batch: int, t_len: int):
    """One inverted-dropout mask per BiLSTM layer, shape (B, T, 2H)."""
    p = cfg.dropout_rate
    if p == 0.0:
        return None
    shape = (batch, t_len, 2 * cfg.hidden_units)
    return [(rng.random(shape) >= p) / (1.0 - p) for _ in range(cfg.num_bilstm_layers)]


def _standardize(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    if "in.mean" in params:
        return (x - params["in.mean"]) / params["in.std"]
    return x


def forward_batch(params: NetworkParams, cfg: NetworkConfig, x: np.ndarray, masks=None):
    """Scores for equal-length sequences ``x`` (B, T, D). Returns ``(probs, cache)``."""
    _check_input(x, cfg)
    h = cfg.hidden_units
    act = _standardize(params, x)
    caches = []
    for layer in range(cfg.num_bilstm_layers):
        fwd, bwd = params.cell(layer, "fwd"), params.cell(layer, "bwd")
        out, cache = bilstm_forward(fwd, bwd, act)
        if masks is not None:
            out = out * masks[layer]
        caches.append(cache)
        act = out
    pooled = np.concatenate([act[:, -1, :h], act[:, 0, h:]], axis=-1)
    logits = pooled @ params["out.W"] + params["out.b"]
    probs = sigmoid(logits)
    return probs, (caches, pooled, act.shape)


def forward(params: NetworkParams, cfg: NetworkConfig, features, mode: str = "infer", rng=None) -> np.ndarray:
    """Per-class sigmoid scores for one sequence, shape (num_classes,)."""
    x = _as_matrix(features)
    if x.ndim != 2:
        raise ShapeError(f"expected a (T, D) feature matrix, got shape {x.shape}")
    masks = None
    if mode == "train":
        rng = rng if rng is not None else np.random.default_rng()
        masks = dropout_masks(rng, cfg, 1, x.shape[0])
    elif mode != "infer":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    probs, _ = forward_batch(params, cfg, x[None], masks)
    return probs[0]


def normalized(scores: np.ndarray) -> np.ndarray:
    """Scores rescaled to sum to one along the last axis (for argmax decisions)."""
    s = np.asarray(scores, dtype=np.float64)
    return s / s.sum(axis=-1, keepdims=True)


def loss(probs, label: int) -> float:
    """Summed per-unit binary cross-entropy against the one-hot target."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.zeros_like(p)
    y[..., label] = 1.0
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def batch_losses(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.zeros_like(p)
    y[np.arange(p.shape[0]), labels] = 1.0
    return -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p), axis=1)


def loss_and_grad_batch(params: NetworkParams, cfg: NetworkConfig, x: np.ndarray, labels, masks=None):
    """Summed loss and summed gradients over an equal-length batch.

    Returns ``(loss_sum, grads, probs)``; ``grads`` holds trainable arrays only.
    """
    labels = np.asarray(labels, dtype=int)
    probs, (caches, pooled, out_shape) = forward_batch(params, cfg, x, masks)
    h = cfg.hidden_units
    y = np.zeros_like(probs)
    y[np.arange(probs.shape[0]), labels] = 1.0
    # d(BCE)/d(logit) = p - y
    dlogits = probs - y
    grads = {}
    grads["out.W"] = pooled.T @ dlogits
    grads["out.b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ params["out.W"].T
    dout = np.zeros(out_shape)
    dout[:, -1, :h] = dpooled[:, :h]
    dout[:, 0, h:] = dpooled[:, h:]
    for layer in range(cfg.num_bilstm_layers - 1, -1, -1):
        if masks is not None:
            dout = dout * masks[layer]
        fwd, bwd = params.cell(layer, "fwd"), params.cell(layer, "bwd")
        dout, g_f, g_b = bilstm_backward(fwd, bwd, caches[layer], dout)
        for direction, g in (("fwd", g_f), ("bwd", g_b)):
            p = f"l{layer}.{direction}"
            grads[f"{p}.W"], grads[f"{p}.U"], grads[f"{p}.b"] = g
    ordered = NetworkParams({k: grads[k] for k in cfg.shapes()})
    return float(batch_losses(probs, labels).sum()), ordered, probs


def backward(params: NetworkParams, cfg: NetworkConfig, features, label: int, rng=None, mode: str = "train") -> NetworkParams:
    """Exact gradient of ``loss(forward(...), label)`` for one sequence.

    In train mode the dropout mask is drawn once from ``rng`` and held fixed
    for the whole call.
    """
    x = _as_matrix(features)[None]
    masks = None
    if mode == "train":
        rng = rng if rng is not None else np.random.default_rng()
        masks = dropout_masks(rng, cfg, 1, x.shape[1])
    _, grads, _ = loss_and_grad_batch(params, cfg, x, [label], masks)
    return grads


def predict_batch(params: NetworkParams, cfg: NetworkConfig, sequences, max_batch: int = 256) -> np.ndarray:
    """Inference scores for a list of variable-length sequences, in input order."""
    mats = [_as_matrix(s) for s in sequences]
    out = np.empty((len(mats), cfg.num_classes))
    for idx in group_by_length(mats, max_batch):
        x = np.stack([mats[i] for i in idx])
        out[idx], _ = forward_batch(params, cfg, x)
    return out


def group_by_length(mats, max_batch: int | None = None) -> list[list[int]]:
    """Indices grouped by sequence length, first-seen order, chunked to ``max_batch``."""
    groups: dict[int, list[int]] = {}
    for i, m in enumerate(mats):
        groups.setdefault(m.shape[0], []).append(i)
    out = []
    for idx in groups.values():
        if max_batch:
            out.extend(idx[s : s + max_batch] for s in range(0, len(idx), max_batch))
        else:
            out.append(idx)
    return out
