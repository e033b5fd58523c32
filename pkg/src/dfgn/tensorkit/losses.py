"""Scalar loss ops: position cross-entropy and binary cross-entropy."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, record

_EPS = 1e-7


def ce_over_positions(logits: Tensor, target_index: int) -> Tensor:
    """-log softmax(logits)[target] over a flat logit vector."""
    data = logits.data.reshape(-1)
    n = data.shape[0]
    if not 0 <= target_index < n:
        raise ShapeError(f"target index {target_index} out of range for {n} logits")
    m = data.max()
    e = np.exp(data - m)
    z = e.sum()
    p = e / z
    loss = np.log(z) + m - data[target_index]

    def backward(g):
        gl = p.copy()
        gl[target_index] -= 1.0
        return ((float(g) * gl).reshape(logits.shape),)

    return record(np.asarray(loss), (logits,), backward)


def bce(probits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1-1e-7]."""
    t = np.asarray(targets, dtype=float).reshape(-1)
    p_raw = probits.data.reshape(-1)
    if t.shape != p_raw.shape:
        raise ShapeError(f"targets {t.shape} do not match probits {p_raw.shape}")
    p = np.clip(p_raw, _EPS, 1.0 - _EPS)
    n = p.shape[0]
    loss = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean()
    inside = (p_raw > _EPS) & (p_raw < 1.0 - _EPS)

    def backward(g):
        gp = np.where(inside, (p - t) / (p * (1.0 - p) * n), 0.0)
        return ((float(g) * gp).reshape(probits.shape),)

    return record(np.asarray(loss), (probits,), backward)
