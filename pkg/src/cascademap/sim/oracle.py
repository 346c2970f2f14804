"""Dense reference forward pass, written without the tiled kernels."""
from __future__ import annotations

import numpy as np

from ..model_ir import INT8_MAX, INT8_MIN


def wrap_int32(v):
    v = np.asarray(v, dtype=np.int64)
    return ((v + 2**31) % 2**32) - 2**31


def shift_round(v, shift):
    """Arithmetic right shift rounding half away from zero."""
    v = np.asarray(v, dtype=np.int64)
    if shift == 0:
        return v
    mag = (np.abs(v) + (1 << (shift - 1))) >> shift
    return np.where(v < 0, -mag, mag)


def requantize_ref(acc, bias, shift, relu):
    v = np.asarray(acc, dtype=np.int64)
    if bias is not None:
        v = wrap_int32(v + np.asarray(bias, dtype=np.int64)[None, :])
    if relu:
        v = np.maximum(v, 0)
    v = shift_round(v, shift)
    return np.clip(v, INT8_MIN, INT8_MAX).astype(np.int8)


def mean_round(col_sums, m):
    """Integer mean rounding half away from zero."""
    s = np.asarray(col_sums, dtype=np.int64)
    q = (2 * np.abs(s) + m) // (2 * m)
    return np.where(s < 0, -q, q)


def dense_acc(x, w):
    return wrap_int32(np.asarray(x, dtype=np.int64) @ np.asarray(w, dtype=np.int64))


def reference_forward(model, x, params):
    """Per-layer INT8 outputs of the plain (untiled) computation."""
    x = np.asarray(x)
    if x.shape != tuple(model.input_shape):
        raise ValueError(f"input shape {x.shape} != model input {tuple(model.input_shape)}")
    params.check(model)
    outs = []
    cur = x.astype(np.int8)
    for layer, p in zip(model.layers, params.layers):
        if layer.kind == "dense":
            if cur.shape != (layer.M, layer.K):
                raise ValueError(f"layer input {cur.shape} != {(layer.M, layer.K)}")
            cur = requantize_ref(dense_acc(cur, p.weight), p.bias, layer.shift, layer.has_relu)
        else:
            sums = cur.astype(np.int64).sum(axis=0, keepdims=True)
            if layer.reduce_kind == "mean":
                sums = mean_round(sums, layer.M)
            cur = requantize_ref(sums, None, layer.shift, False)
        outs.append(cur)
    return outs
