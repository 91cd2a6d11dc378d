"""Single-direction LSTM sequence kernels used by the BiLSTM layer."""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_sequence_forward(x, w_ih, w_hh, bias):
    """Run an LSTM over (N, T, D) from zero state; return all hidden states (N, T, H)."""
    n, t_len, _ = x.shape
    hid = w_hh.shape[0]
    pre = (x.reshape(n * t_len, -1) @ w_ih + bias).reshape(n, t_len, 4 * hid)
    h = np.zeros((n, hid), dtype=x.dtype)
    c = np.zeros((n, hid), dtype=x.dtype)
    hs = np.empty((n, t_len, hid), dtype=x.dtype)
    gates = np.empty((t_len, n, 4 * hid), dtype=x.dtype)
    cs = np.empty((t_len + 1, n, hid), dtype=x.dtype)
    tanh_cs = np.empty((t_len, n, hid), dtype=x.dtype)
    cs[0] = c
    for t in range(t_len):
        a = pre[:, t] + h @ w_hh
        g = gates[t]
        g[:, : 2 * hid] = _sigmoid(a[:, : 2 * hid])
        g[:, 2 * hid : 3 * hid] = np.tanh(a[:, 2 * hid : 3 * hid])
        g[:, 3 * hid :] = _sigmoid(a[:, 3 * hid :])
        c = g[:, hid : 2 * hid] * c + g[:, :hid] * g[:, 2 * hid : 3 * hid]
        cs[t + 1] = c
        tanh_cs[t] = np.tanh(c)
        h = g[:, 3 * hid :] * tanh_cs[t]
        hs[:, t] = h
    return hs, (x, hs, gates, cs, tanh_cs)


def lstm_sequence_backward(dhs, cache, w_ih, w_hh, bias):
    """Backprop through time given dLoss/dh_t for every step.

    Returns (dx, (d_w_ih, d_w_hh, d_bias)).
    """
    x, hs, gates, cs, tanh_cs = cache
    n, t_len, d_in = x.shape
    hid = w_hh.shape[0]
    da_all = np.empty((n, t_len, 4 * hid), dtype=dhs.dtype)
    dh_next = np.zeros((n, hid), dtype=dhs.dtype)
    dc_next = np.zeros((n, hid), dtype=dhs.dtype)
    d_w_hh = np.zeros_like(w_hh)
    zero_h = np.zeros((n, hid), dtype=dhs.dtype)
    for t in reversed(range(t_len)):
        g = gates[t]
        i, f, gg, o = g[:, :hid], g[:, hid : 2 * hid], g[:, 2 * hid : 3 * hid], g[:, 3 * hid :]
        dh = dhs[:, t] + dh_next
        tc = tanh_cs[t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = da_all[:, t]
        da[:, :hid] = dc * gg * i * (1.0 - i)
        da[:, hid : 2 * hid] = dc * cs[t] * f * (1.0 - f)
        da[:, 2 * hid : 3 * hid] = dc * i * (1.0 - gg * gg)
        da[:, 3 * hid :] = dh * tc * o * (1.0 - o)
        h_prev = hs[:, t - 1] if t > 0 else zero_h
        d_w_hh += h_prev.T @ da
        dh_next = da @ w_hh.T
        dc_next = dc * f
    flat = da_all.reshape(n * t_len, 4 * hid)
    d_w_ih = x.reshape(n * t_len, d_in).T @ flat
    d_bias = flat.sum(axis=0)
    dx = (flat @ w_ih.T).reshape(n, t_len, d_in)
    return dx, (d_w_ih, d_w_hh, d_bias)
