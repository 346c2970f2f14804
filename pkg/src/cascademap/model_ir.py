"""Workload description: chains of INT8 dense layers with an optional global aggregation.

Model files are line oriented::

    # comments start with '#'
    name = JSC-M
    input = 64x16
    dense 64 bias relu shift=8
    dense 32 bias relu
    shift = 9              # applies to the most recent layer
    aggregate mean shift=0
    dense 5 bias

Blank lines are ignored. ``shift`` defaults to 0 and must lie in [0, 31].
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

INT8_MIN, INT8_MAX = -128, 127
INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1
MAX_SHIFT = 31


class ModelError(ValueError):
    """Raised for malformed model documents or broken layer chains."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class DenseLayer:
    M: int
    K: int
    N: int
    has_bias: bool = False
    has_relu: bool = False
    shift: int = 0

    kind = "dense"

    def __post_init__(self):
        for dim in ("M", "K", "N"):
            if getattr(self, dim) < 1:
                raise ModelError(f"dense layer {dim} must be >= 1, got {getattr(self, dim)}")
        if not 0 <= self.shift <= MAX_SHIFT:
            raise ModelError(f"shift must be in [0, {MAX_SHIFT}], got {self.shift}")

    @property
    def out_shape(self):
        return (self.M, self.N)


@dataclass(frozen=True)
class AggregationLayer:
    """Reduces an M x F activation along M to a 1 x F vector."""

    M: int
    F: int
    reduce_kind: str = "mean"
    shift: int = 0

    kind = "aggregate"

    def __post_init__(self):
        if self.reduce_kind not in ("sum", "mean"):
            raise ModelError(f"reduce_kind must be 'sum' or 'mean', got {self.reduce_kind!r}")
        if self.M < 1 or self.F < 1:
            raise ModelError("aggregation input dims must be >= 1")
        if not 0 <= self.shift <= MAX_SHIFT:
            raise ModelError(f"shift must be in [0, {MAX_SHIFT}], got {self.shift}")

    @property
    def out_shape(self):
        return (1, self.F)


Layer = Union[DenseLayer, AggregationLayer]


@dataclass(frozen=True)
class QuantScheme:
    """Power-of-two INT8 quantization: per-layer right shifts, INT32 bias."""

    shifts: tuple
    act_bits: int = 8
    weight_bits: int = 8
    bias_bits: int = 32


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple
    layers: tuple = field(default_factory=tuple)
    dtype: str = "int8"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        _check_chain(self)

    @property
    def dense_layers(self):
        return [l for l in self.layers if l.kind == "dense"]

    @property
    def aggregation_index(self):
        for i, l in enumerate(self.layers):
            if l.kind == "aggregate":
                return i
        return None

    @property
    def output_shape(self):
        return self.layers[-1].out_shape

    @property
    def quant(self):
        return QuantScheme(shifts=tuple(l.shift for l in self.layers))

    def __len__(self):
        return len(self.layers)


def _check_chain(model):
    if not model.layers:
        raise ModelError(f"model {model.name!r} has no layers")
    if len(model.input_shape) != 2 or min(model.input_shape) < 1:
        raise ModelError(f"bad input shape {model.input_shape}")
    n_agg = sum(1 for l in model.layers if l.kind == "aggregate")
    if n_agg > 1:
        raise ModelError(f"model {model.name!r} has {n_agg} aggregation layers; at most one allowed")
    rows, cols = model.input_shape
    for i, layer in enumerate(model.layers):
        if layer.kind == "dense":
            if (layer.M, layer.K) != (rows, cols):
                raise ModelError(
                    f"shape chain broken between layer {i - 1} (output {rows}x{cols}) "
                    f"and layer {i} (input {layer.M}x{layer.K})"
                )
        else:
            if (layer.M, layer.F) != (rows, cols):
                raise ModelError(
                    f"shape chain broken between layer {i - 1} (output {rows}x{cols}) "
                    f"and aggregation layer {i} (input {layer.M}x{layer.F})"
                )
            if i == 0:
                raise ModelError("aggregation cannot be the first layer")
            if model.layers[i - 1].kind != "dense":
                raise ModelError(f"aggregation layer {i} must follow a dense layer")
        rows, cols = layer.out_shape


def validate_shapes(model):
    """Return the effective (M, K, N) of every dense layer, re-checking the chain.

    Layers after an aggregation see M = 1.
    """
    if not model.layers:
        raise ModelError("empty layer list")
    _check_chain(model)
    return [(l.M, l.K, l.N) for l in model.layers if l.kind == "dense"]


def build_model(name, input_shape, spec, reduce_kind="mean"):
    """Build a chained model from a compact description.

    ``spec`` is a list of items: an int ``N`` (dense, bias+relu), a dict with
    keys ``N``/``bias``/``relu``/``shift``, or the string ``"aggregate"``.
    """
    rows, cols = input_shape
    layers = []
    for item in spec:
        if item == "aggregate" or (isinstance(item, dict) and item.get("kind") == "aggregate"):
            opts = item if isinstance(item, dict) else {}
            layers.append(AggregationLayer(rows, cols, opts.get("reduce_kind", reduce_kind),
                                           opts.get("shift", 0)))
            rows = 1
            continue
        if isinstance(item, int):
            item = {"N": item}
        layer = DenseLayer(rows, cols, item["N"], item.get("bias", True), item.get("relu", True),
                           item.get("shift", 0))
        layers.append(layer)
        cols = layer.N
    return ModelSpec(name, tuple(input_shape), tuple(layers))


_SHAPE_RE = re.compile(r"^(\d+)\s*[xX×]\s*(\d+)$")


def _parse_shift(token, lineno):
    try:
        value = int(token)
    except ValueError:
        raise ModelError(f"shift must be an integer, got {token!r}", lineno) from None
    if not 0 <= value <= MAX_SHIFT:
        raise ModelError(f"shift must be in [0, {MAX_SHIFT}], got {value}", lineno)
    return value


def parse_model(text):
    """Parse a model document into a validated :class:`ModelSpec`."""
    name = None
    input_shape = None
    pending = []  # [kind, opts, lineno]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip().lower()
        if eq and key in ("name", "input", "shift"):
            value = value.strip()
            if key == "name":
                if not value:
                    raise ModelError("empty name", lineno)
                name = value
            elif key == "input":
                m = _SHAPE_RE.match(value)
                if not m:
                    raise ModelError(f"input must look like MxK, got {value!r}", lineno)
                input_shape = (int(m.group(1)), int(m.group(2)))
            else:
                if not pending:
                    raise ModelError("'shift' before any layer", lineno)
                pending[-1][1]["shift"] = _parse_shift(value, lineno)
            continue

        tokens = line.replace("=", " = ").split()
        head = tokens[0].lower()
        rest = _merge_kv(tokens[1:], lineno)
        if head == "dense":
            if not rest or not rest[0].isdigit():
                raise ModelError("dense needs a node count", lineno)
            opts = {"N": int(rest[0]), "bias": False, "relu": False, "shift": 0}
            for tok in rest[1:]:
                if tok == "bias":
                    opts["bias"] = True
                elif tok == "relu":
                    opts["relu"] = True
                elif tok.startswith("shift="):
                    opts["shift"] = _parse_shift(tok[6:], lineno)
                else:
                    raise ModelError(f"unknown dense option {tok!r}", lineno)
            pending.append(["dense", opts, lineno])
        elif head in ("aggregate", "aggregation"):
            opts = {"reduce_kind": "mean", "shift": 0}
            for tok in rest:
                if tok in ("sum", "mean"):
                    opts["reduce_kind"] = tok
                elif tok.startswith("shift="):
                    opts["shift"] = _parse_shift(tok[6:], lineno)
                else:
                    raise ModelError(f"unknown aggregate option {tok!r}", lineno)
            pending.append(["aggregate", opts, lineno])
        else:
            raise ModelError(f"unrecognized directive {tokens[0]!r}", lineno)

    if name is None:
        raise ModelError("missing 'name = ...'")
    if input_shape is None:
        raise ModelError("missing 'input = MxK'")
    if not pending:
        raise ModelError(f"model {name!r} has no layers")

    rows, cols = input_shape
    layers = []
    n_agg = 0
    for kind, opts, lineno in pending:
        if kind == "aggregate":
            n_agg += 1
            if n_agg > 1:
                raise ModelError("more than one aggregation layer", lineno)
            if not layers or layers[-1].kind != "dense":
                raise ModelError("aggregation must follow a dense layer", lineno)
            layers.append(AggregationLayer(rows, cols, opts["reduce_kind"], opts["shift"]))
            rows = 1
        else:
            layers.append(DenseLayer(rows, cols, opts["N"], opts["bias"], opts["relu"], opts["shift"]))
            cols = opts["N"]
    return ModelSpec(name, input_shape, tuple(layers))


def _merge_kv(tokens, lineno):
    # "shift = 3" arrives as ["shift", "=", "3"]
    out = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and tokens[i + 1] == "=":
            if i + 2 >= len(tokens):
                raise ModelError(f"missing value for {tokens[i]!r}", lineno)
            out.append(f"{tokens[i]}={tokens[i + 2]}")
            i += 3
        else:
            out.append(tokens[i])
            i += 1
    return out


def serialize_model(model):
    lines = [f"name = {model.name}", f"input = {model.input_shape[0]}x{model.input_shape[1]}"]
    for layer in model.layers:
        if layer.kind == "dense":
            parts = ["dense", str(layer.N)]
            if layer.has_bias:
                parts.append("bias")
            if layer.has_relu:
                parts.append("relu")
            parts.append(f"shift={layer.shift}")
        else:
            parts = ["aggregate", layer.reduce_kind, f"shift={layer.shift}"]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_model(path):
    with open(path) as fh:
        return parse_model(fh.read())


BUNDLED_MODELS = ("jsc-m", "jsc-xl", "jsc-xl-d", "deepsets-32", "deepsets-64", "deepsets-32-d",
                  "deepsets-64-d", "motivating", "two-layer")


def bundled_model(name):
    """One of the workloads shipped in ``data/models``."""
    from .arch import bundled_text

    return parse_model(bundled_text(f"models/{name}.model"))
