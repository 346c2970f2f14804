"""Layer parameters and seeded random draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model_ir import INT32_MAX, INT32_MIN


@dataclass
class DenseParams:
    weight: np.ndarray  # K x N int8
    bias: np.ndarray | None  # N int32


@dataclass
class ModelParams:
    layers: list  # DenseParams, or None for aggregation layers

    def check(self, model):
        if len(self.layers) != len(model.layers):
            raise ValueError(f"params for {len(self.layers)} layers, model has {len(model.layers)}")
        for i, (layer, p) in enumerate(zip(model.layers, self.layers)):
            if layer.kind == "aggregate":
                if p is not None:
                    raise ValueError(f"layer {i} is an aggregation and takes no parameters")
                continue
            if p is None or p.weight.shape != (layer.K, layer.N) or p.weight.dtype != np.int8:
                raise ValueError(f"layer {i}: weight must be int8 of shape {(layer.K, layer.N)}")
            if layer.has_bias:
                if p.bias is None or p.bias.shape != (layer.N,) or p.bias.dtype != np.int32:
                    raise ValueError(f"layer {i}: bias must be int32 of shape ({layer.N},)")
            elif p.bias is not None:
                raise ValueError(f"layer {i} has no bias but one was given")


def random_params(model, seed=0, bias_range="acc"):
    """Uniform INT8 weights; INT32 biases.

    ``bias_range="acc"`` draws biases on the scale of the layer's accumulator
    (|bias| < K * 2**14) so ReLU and requantization see both signs;
    ``"full"`` draws over the whole INT32 range.
    """
    rng = np.random.default_rng(seed)
    out = []
    for layer in model.layers:
        if layer.kind == "aggregate":
            out.append(None)
            continue
        w = rng.integers(-128, 128, size=(layer.K, layer.N), dtype=np.int64).astype(np.int8)
        bias = None
        if layer.has_bias:
            if bias_range == "full":
                lo, hi = INT32_MIN, INT32_MAX
            elif bias_range == "acc":
                hi = layer.K * (1 << 14)
                lo = -hi
            else:
                raise ValueError(f"unknown bias_range {bias_range!r}")
            bias = rng.integers(lo, hi, size=layer.N, endpoint=True, dtype=np.int64).astype(np.int32)
        out.append(DenseParams(w, bias))
    return ModelParams(out)


def random_input(model, seed=0):
    rng = np.random.default_rng(seed + 0x5EED)
    m, k = model.input_shape
    return rng.integers(-128, 128, size=(m, k), dtype=np.int64).astype(np.int8)
