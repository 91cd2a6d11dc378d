"""Softmax cross-entropy and the Adam update."""

from __future__ import annotations

import numpy as np


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in tensor {name!r}")
        self.tensor = name


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, target):
    """Mean cross-entropy of soft targets against softmax(logits).

    Works on a single logit vector or a (N, K) batch. The gradient is
    softmax - target, divided by N for batches.
    """
    logits = np.asarray(logits)
    target = np.asarray(target, dtype=logits.dtype)
    if logits.shape != target.shape:
        raise ValueError(f"logits {logits.shape} and target {target.shape} differ")
    sums = target.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("targets must sum to 1")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_p = z - log_norm
    per_example = -(target * log_p).sum(axis=-1)
    grad = np.exp(log_p) - target
    if logits.ndim == 1:
        return float(per_example), grad
    n = logits.shape[0]
    return float(per_example.mean()), grad / n


def adam_step(params: dict, grads: dict, state: dict, lr: float = 1e-3, t: int = 1,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, frozen=()):
    """In-place bias-corrected Adam update; frozen names are skipped entirely."""
    if t < 1:
        raise ValueError("step t must be >= 1")
    m_state = state.setdefault("m", {})
    v_state = state.setdefault("v", {})
    for name, p in params.items():
        if name in frozen or name not in grads:
            continue
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
        m = m_state.get(name)
        if m is None:
            m = m_state[name] = np.zeros_like(p)
            v_state[name] = np.zeros_like(p)
        v = v_state[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    return params, state
