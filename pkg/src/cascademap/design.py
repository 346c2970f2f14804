"""Design-point data types, tile geometry and the JSON design-file format.

A design file is a JSON object::

    {
      "format": "cascademap-design/1",
      "model": "JSC-M",
      "mapping": [[4, 1, 1], [4, 2, 1], ...],       # (A, B, C) per layer
      "placement": [[row, col, height, width], ...],  # per layer
      "ingress": "dma", "egress": "dma",              # boundary link kinds
      "weight_dma": [false, ...],                     # optional
      "edges": [{"src": null, "dst": 0, "decision": "dma", ...}, ...]
    }

``edges`` is informational; it is rebuilt from mapping + placement on load and
checked against the stored decisions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil

DESIGN_FORMAT = "cascademap-design/1"


class DesignError(ValueError):
    pass


def cdiv(a, b):
    return -(-a // b)


def round_up(x, m):
    return cdiv(x, m) * m


def is_pow2(x):
    return x >= 1 and x & (x - 1) == 0


def split_ok(dim, parts, min_piece):
    """A dimension may be cut into ``parts`` pieces if each holds real data and enough work."""
    if parts == 1:
        return True
    piece = cdiv(dim, parts)
    return piece >= min_piece and (parts - 1) * piece < dim


def piece_range(dim, parts, idx):
    piece = cdiv(dim, parts)
    lo = idx * piece
    return (lo, min(dim, lo + piece))


@dataclass(frozen=True)
class KernelShape:
    H1: int
    W1: int
    W2: int


@dataclass(frozen=True)
class LayerGeometry:
    """Partition of one dense layer: padded per-tile kernel and logical piece sizes."""

    M: int
    K: int
    N: int
    A: int
    B: int
    C: int
    kernel: KernelShape

    def m_range(self, a):
        return piece_range(self.M, self.A, a)

    def k_range(self, b):
        return piece_range(self.K, self.B, b)

    def n_range(self, c):
        return piece_range(self.N, self.C, c)

    @property
    def n_tiles(self):
        return self.A * self.B * self.C

    @property
    def rows(self):
        return self.A * self.C

    @property
    def cols(self):
        return self.B


def layer_geometry(layer, abc, arch):
    A, B, C = abc
    M, K, N = layer.M, layer.K, layer.N
    kernel = KernelShape(
        round_up(cdiv(M, A), 2 * arch.block_m),
        round_up(cdiv(K, B), arch.block_k),
        round_up(cdiv(N, C), 2 * arch.block_n),
    )
    return LayerGeometry(M, K, N, A, B, C, kernel)


@dataclass(frozen=True)
class AggGeometry:
    """Aggregation tiles mirror the producer's A row pieces (producer has C = 1)."""

    M: int
    F: int
    A: int
    H1: int
    W2: int

    def m_range(self, a):
        return piece_range(self.M, self.A, a)

    @property
    def n_tiles(self):
        return self.A

    @property
    def rows(self):
        return self.A

    @property
    def cols(self):
        return 1


def geometries(model, mapping, arch):
    """Per-layer geometry for a mapping; aggregation entries follow their producer."""
    if len(mapping) != len(model.layers):
        raise DesignError(f"mapping has {len(mapping)} entries for {len(model.layers)} layers")
    out = []
    for i, (layer, abc) in enumerate(zip(model.layers, mapping)):
        if layer.kind == "dense":
            out.append(layer_geometry(layer, abc, arch))
        else:
            prev = out[i - 1]
            if prev.C != 1:
                raise DesignError(f"layer {i - 1} feeds an aggregation and must have C = 1")
            if tuple(abc) != (prev.A, 1, 1):
                raise DesignError(f"aggregation layer {i} must map to ({prev.A}, 1, 1)")
            out.append(AggGeometry(layer.M, layer.F, prev.A, prev.kernel.H1, prev.kernel.W2))
    return out


def partition_legal(layer, abc, arch):
    A, B, C = abc
    if not (is_pow2(A) and is_pow2(B) and is_pow2(C)):
        return False
    return (split_ok(layer.M, A, 2 * arch.block_m)
            and split_ok(layer.K, B, arch.block_k)
            and split_ok(layer.N, C, 2 * arch.block_n))


@dataclass(frozen=True)
class Rect:
    row: int
    col: int
    height: int
    width: int

    @property
    def row_end(self):
        return self.row + self.height

    @property
    def col_end(self):
        return self.col + self.width

    def overlaps(self, other):
        return not (self.row_end <= other.row or other.row_end <= self.row
                    or self.col_end <= other.col or other.col_end <= self.col)

    def as_list(self):
        return [self.row, self.col, self.height, self.width]


def dense_tile(rect, abc, a, b, c):
    """Grid coordinate of tile (a, b, c) of a dense layer: row a*C + c, column b."""
    _, _, C = abc
    return (rect.row + a * C + c, rect.col + b)


def agg_tile(rect, a):
    return (rect.row + a, rect.col)


def manhattan(p, q):
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


@dataclass(frozen=True)
class Channel:
    """One buffer transfer. ``src`` is None for PLIO ingress, ``dsts`` empty for egress.

    ``rows``/``cols`` give the slice of the producer's logical output carried
    (for ingress: of the model input).
    """

    src: tuple | None
    dsts: tuple
    rows: tuple
    cols: tuple
    bits: int
    distance: int
    payload: str = "act"  # "act" or "weight"


@dataclass(frozen=True)
class Edge:
    src: int | None
    dst: int | None
    decision: str
    traffic: tuple = ()
    channels: tuple = ()

    @property
    def max_bits(self):
        return max((ch.bits for ch in self.channels), default=0)

    @property
    def total_bits(self):
        return sum(ch.bits for ch in self.channels)

    @property
    def max_distance(self):
        return max((ch.distance for ch in self.channels), default=0)

    @property
    def name(self):
        if self.src is None:
            return f"ingress->L{self.dst}"
        if self.dst is None:
            return f"L{self.src}->egress"
        return f"L{self.src}->L{self.dst}"


@dataclass(frozen=True)
class CommPlan:
    edges: tuple

    def into(self, layer_idx):
        return self.edges[layer_idx]

    def out_of(self, layer_idx):
        return self.edges[layer_idx + 1]


@dataclass(frozen=True)
class Placement:
    rects: tuple
    grid: tuple  # (rows, cols)
    adjacency: tuple = ()  # per inter-layer edge, len(rects) - 1

    def occupancy(self):
        import numpy as np

        occ = np.zeros(self.grid, dtype=np.int32) - 1
        for i, r in enumerate(self.rects):
            occ[r.row:r.row_end, r.col:r.col_end] = i
        return occ


@dataclass
class DesignPoint:
    model_name: str
    mapping: tuple
    placement: Placement
    comm: CommPlan
    ingress: str = "dma"
    egress: str = "dma"
    weight_dma: tuple = ()
    estimate: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n_aies(self):
        return sum(a * b * c for a, b, c in self.mapping)

    def mapping_vector(self):
        return tuple(x for abc in self.mapping for x in abc)

    def to_dict(self):
        d = {
            "format": DESIGN_FORMAT,
            "model": self.model_name,
            "mapping": [list(m) for m in self.mapping],
            "placement": [r.as_list() for r in self.placement.rects],
            "grid": list(self.placement.grid),
            "ingress": self.ingress,
            "egress": self.egress,
            "edges": [
                {"src": e.src, "dst": e.dst, "decision": e.decision, "traffic": list(e.traffic),
                 "channels": len(e.channels), "max_bits": e.max_bits, "max_distance": e.max_distance}
                for e in self.comm.edges
            ],
        }
        if any(self.weight_dma):
            d["weight_dma"] = list(self.weight_dma)
        return d


def save_design(design, path):
    with open(path, "w") as fh:
        json.dump(design.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_design_dict(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DesignError(f"design file is not valid JSON: {exc}") from None
    if d.get("format") != DESIGN_FORMAT:
        raise DesignError(f"unsupported design format {d.get('format')!r}")
    for key in ("mapping", "placement"):
        if key not in d:
            raise DesignError(f"design file lacks {key!r}")
    if len(d["mapping"]) != len(d["placement"]):
        raise DesignError("mapping and placement lengths differ")
    return d


def bits_of(rows, cols, bits_per_elem=8):
    return (rows[1] - rows[0]) * (cols[1] - cols[0]) * bits_per_elem


def ceil_cycles(x):
    """Integral cycle count; tolerant of float noise just above an integer."""
    return int(ceil(round(x, 6)))
