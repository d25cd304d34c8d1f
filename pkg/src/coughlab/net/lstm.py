"""LSTM recurrences and their backpropagation through time.

Sequences are batched as (B, T, D) arrays; every sequence in a batch has
the same length, so no masking is involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import LstmCellParams


def sigmoid(z):
    # tanh form avoids overflow in exp for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell_step(params: LstmCellParams, x_t, h_prev, c_prev):
    """One LSTM step. Works on single vectors or (B, .) batches."""
    h = params.hidden
    z = x_t @ params.W.T + h_prev @ params.U.T + params.b
    i = sigmoid(z[..., :h])
    f = sigmoid(z[..., h : 2 * h])
    g = np.tanh(z[..., 2 * h : 3 * h])
    o = sigmoid(z[..., 3 * h :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


@dataclass
class LstmCache:
    x: np.ndarray  # (B, T, D)
    acts: np.ndarray  # (B, T, 4H) post-nonlinearity gates [i, f, g, o]
    h: np.ndarray  # (B, T+1, H); h[:, 0] is the initial state
    c: np.ndarray  # (B, T+1, H)
    tanh_c: np.ndarray  # (B, T, H)


def lstm_forward(params: LstmCellParams, x: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Run left to right from zero state. Returns hidden states (B, T, H)."""
    b_sz, t_len, _ = x.shape
    h_dim = params.hidden
    xw = x @ params.W.T + params.b
    acts = np.empty((b_sz, t_len, 4 * h_dim))
    hs = np.zeros((b_sz, t_len + 1, h_dim))
    cs = np.zeros((b_sz, t_len + 1, h_dim))
    tanh_c = np.empty((b_sz, t_len, h_dim))
    u_t = params.U.T
    for t in range(t_len):
        z = xw[:, t] + hs[:, t] @ u_t
        a = acts[:, t]
        a[:, : 2 * h_dim] = sigmoid(z[:, : 2 * h_dim])
        a[:, 2 * h_dim : 3 * h_dim] = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        a[:, 3 * h_dim :] = sigmoid(z[:, 3 * h_dim :])
        cs[:, t + 1] = a[:, h_dim : 2 * h_dim] * cs[:, t] + a[:, :h_dim] * a[:, 2 * h_dim : 3 * h_dim]
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = a[:, 3 * h_dim :] * tanh_c[:, t]
    return hs[:, 1:], LstmCache(x, acts, hs, cs, tanh_c)


def lstm_backward(params: LstmCellParams, cache: LstmCache, dh_out: np.ndarray):
    """BPTT given dLoss/dh for every output step.

    Returns ``(dx, dW, dU, db)``.
    """
    b_sz, t_len, d = cache.x.shape
    h_dim = params.hidden
    acts, cs, tanh_c = cache.acts, cache.c, cache.tanh_c
    dz = np.empty((b_sz, t_len, 4 * h_dim))
    dh_next = np.zeros((b_sz, h_dim))
    dc_next = np.zeros((b_sz, h_dim))
    U = params.U
    for t in range(t_len - 1, -1, -1):
        a = acts[:, t]
        i = a[:, :h_dim]
        f = a[:, h_dim : 2 * h_dim]
        g = a[:, 2 * h_dim : 3 * h_dim]
        o = a[:, 3 * h_dim :]
        tc = tanh_c[:, t]
        dh = dh_out[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dzt = dz[:, t]
        dzt[:, :h_dim] = dc * g * i * (1.0 - i)
        dzt[:, h_dim : 2 * h_dim] = dc * cs[:, t] * f * (1.0 - f)
        dzt[:, 2 * h_dim : 3 * h_dim] = dc * i * (1.0 - g * g)
        dzt[:, 3 * h_dim :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dzt @ U
    flat_dz = dz.reshape(-1, 4 * h_dim)
    dW = flat_dz.T @ cache.x.reshape(-1, d)
    dU = flat_dz.T @ cache.h[:, :-1].reshape(-1, h_dim)
    db = flat_dz.sum(axis=0)
    dx = dz @ params.W
    return dx, dW, dU, db


def bilstm_layer(fwd: LstmCellParams, bwd: LstmCellParams, x: np.ndarray):
    """Bidirectional layer: output[t] = [h_fwd[t] ; h_bwd[t]].

    Accepts (T, D) or (B, T, D); the backward cell reads the sequence
    right to left.
    """
    single = x.ndim == 2
    xb = x[None] if single else x
    out, _ = bilstm_forward(fwd, bwd, xb)
    return out[0] if single else out


def bilstm_forward(fwd: LstmCellParams, bwd: LstmCellParams, x: np.ndarray):
    hf, cache_f = lstm_forward(fwd, x)
    hb_rev, cache_b = lstm_forward(bwd, x[:, ::-1])
    return np.concatenate([hf, hb_rev[:, ::-1]], axis=-1), (cache_f, cache_b)


def bilstm_backward(fwd: LstmCellParams, bwd: LstmCellParams, caches, dout: np.ndarray):
    """Returns ``(dx, (dW, dU, db) fwd, (dW, dU, db) bwd)``."""
    h_dim = fwd.hidden
    cache_f, cache_b = caches
    dx_f, *g_f = lstm_backward(fwd, cache_f, dout[..., :h_dim])
    dx_b_rev, *g_b = lstm_backward(bwd, cache_b, dout[:, ::-1, h_dim:])
    return dx_f + dx_b_rev[:, ::-1], g_f, g_b
