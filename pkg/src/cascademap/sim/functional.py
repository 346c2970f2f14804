"""Bit-exact execution of a mapped design, tile by tile."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..design import AggGeometry, agg_tile, dense_tile, geometries, round_up
from .oracle import dense_acc, mean_round


class SimError(RuntimeError):
    """Internal consistency failure: misrouted slice, missing or unconsumed data."""


@dataclass
class Mismatch:
    layer: int
    row: int
    col: int
    got: int
    expected: int

    def __str__(self):
        return (f"layer {self.layer} element ({self.row}, {self.col}): "
                f"got {self.got}, expected {self.expected}")


@dataclass
class FunctionalResult:
    output: np.ndarray
    layers: list  # assembled per-layer outputs
    checks: dict = field(default_factory=dict)


class _Buffer:
    """A tile's input region, filled by channels; each element must land exactly once."""

    def __init__(self, rows, cols):
        self.rows, self.cols = rows, cols
        self.data = np.zeros((rows[1] - rows[0], cols[1] - cols[0]), dtype=np.int8)
        self.count = np.zeros(self.data.shape, dtype=np.int32)

    def write(self, rows, cols, block, what):
        r0, r1 = max(rows[0], self.rows[0]), min(rows[1], self.rows[1])
        c0, c1 = max(cols[0], self.cols[0]), min(cols[1], self.cols[1])
        if r1 <= r0 or c1 <= c0:
            raise SimError(f"{what}: payload rows {rows} cols {cols} has nothing for this tile")
        src = block[r0 - rows[0]:r1 - rows[0], c0 - cols[0]:c1 - cols[0]]
        dr, dc = r0 - self.rows[0], c0 - self.cols[0]
        self.data[dr:dr + src.shape[0], dc:dc + src.shape[1]] = src
        self.count[dr:dr + src.shape[0], dc:dc + src.shape[1]] += 1

    def verify(self, what):
        bad = np.argwhere(self.count != 1)
        if len(bad):
            r, c = bad[0]
            n = self.count[r, c]
            kind = "missing" if n == 0 else "duplicated"
            raise SimError(f"{what}: {kind} element at ({self.rows[0] + r}, {self.cols[0] + c})")


def _slice(piece, rows, cols, what):
    prow, pcol, arr = piece
    if rows[0] < prow[0] or rows[1] > prow[1] or cols[0] < pcol[0] or cols[1] > pcol[1]:
        raise SimError(f"{what}: requested rows {rows} cols {cols} outside source piece {prow} {pcol}")
    return arr[rows[0] - prow[0]:rows[1] - prow[0], cols[0] - pcol[0]:cols[1] - pcol[0]]


def _deliver(edge, pieces, x, weights, bufs, wbufs, layer_idx):
    for n, ch in enumerate(edge.channels):
        what = f"{edge.name} channel {n}"
        if ch.payload == "weight":
            block = weights[ch.rows[0]:ch.rows[1], ch.cols[0]:ch.cols[1]]
            for d in ch.dsts:
                wbufs[d].write(ch.rows, ch.cols, block, what)
            continue
        if ch.src is None:
            block = x[ch.rows[0]:ch.rows[1], ch.cols[0]:ch.cols[1]]
        else:
            if ch.src not in pieces:
                raise SimError(f"{what}: source tile {ch.src} holds no output")
            block = _slice(pieces[ch.src], ch.rows, ch.cols, what)
        for d in ch.dsts:
            if d not in bufs:
                raise SimError(f"{what}: destination {d} is not a tile of layer {layer_idx}")
            # cascade relays pass the whole row payload; each tile keeps its own slice
            bufs[d].write(ch.rows, ch.cols, block, what)


def _pad(block, h, w):
    out = np.zeros((h, w), dtype=np.int8)
    out[:block.shape[0], :block.shape[1]] = block
    return out


def run_functional(design, model, x, params, arch):
    """Execute the mapped dataflow; returns the final output and per-layer outputs."""
    params.check(model)
    x = np.asarray(x, dtype=np.int8)
    if x.shape != tuple(model.input_shape):
        raise SimError(f"input shape {x.shape} != model input {tuple(model.input_shape)}")
    geos = geometries(model, design.mapping, arch)
    rects = design.placement.rects
    edges = design.comm.edges
    bm, bk, bn = arch.block_m, arch.block_k, arch.block_n
    pieces = {}  # tile -> (rows, cols, int8 block) of the previous layer's output
    outs = []
    checks = {"tiles": 0, "psum_blocks": 0}
    prev_full = x
    for i, (layer, geo, p) in enumerate(zip(model.layers, geos, params.layers)):
        rect, abc = rects[i], design.mapping[i]
        edge = edges[i]
        new_pieces = {}
        if isinstance(geo, AggGeometry):
            tiles = [agg_tile(rect, a) for a in range(geo.A)]
            bufs = {t: _Buffer(geo.m_range(a), (0, geo.F)) for a, t in enumerate(tiles)}
            _deliver(edge, pieces, x, None, bufs, {}, i)
            for t, b in bufs.items():
                b.verify(f"{edge.name} into tile {t}")
            # each tile reduces its rows with one MAC row of ones; partials flow top to bottom
            partial = None
            for a in range(geo.A - 1, -1, -1):
                blk = bufs[tiles[a]].data
                h = round_up(max(blk.shape[0], 1), bk)
                w2 = round_up(geo.F, 2 * bn)
                lhs = np.zeros((2 * bm, h), dtype=np.int8)
                lhs[0, :blk.shape[0]] = 1
                acc = kernels.blocked_matmul(lhs, _pad(blk, h, w2), None, bm, bk, bn)[0:1, :]
                partial = acc if partial is None else _wrap_add(partial, acc)
                checks["tiles"] += 1
            vec = partial[:, :geo.F]
            if layer.reduce_kind == "mean":
                vec = mean_round(vec, layer.M).astype(np.int32)
            out_blk = kernels.requantize(vec, None, layer.shift, False)
            new_pieces[tiles[0]] = ((0, 1), (0, geo.F), out_blk)
            full = out_blk
        else:
            tiles = {}
            bufs, wbufs = {}, {}
            for a in range(geo.A):
                for b in range(geo.B):
                    for c in range(geo.C):
                        t = dense_tile(rect, abc, a, b, c)
                        tiles[(a, b, c)] = t
                        bufs[t] = _Buffer(geo.m_range(a), geo.k_range(b))
                        wbufs[t] = _Buffer(geo.k_range(b), geo.n_range(c))
            _deliver(edge, pieces, x, p.weight, bufs, wbufs, i)
            weight_dma = any(ch.payload == "weight" for ch in edge.channels)
            for t, b in bufs.items():
                b.verify(f"{edge.name} into tile {t}")
                if weight_dma:
                    wbufs[t].verify(f"weights of tile {t}")
            k = geo.kernel
            full = np.zeros((geo.M, geo.N), dtype=np.int8)
            for a in range(geo.A):
                for c in range(geo.C):
                    acc = None
                    for b in range(geo.B):
                        t = tiles[(a, b, c)]
                        kr, nr = geo.k_range(b), geo.n_range(c)
                        wblk = wbufs[t].data if weight_dma else p.weight[kr[0]:kr[1], nr[0]:nr[1]]
                        lhs = _pad(bufs[t].data, k.H1, k.W1)
                        rhs = _pad(wblk, k.W1, k.W2)
                        acc = kernels.blocked_matmul(lhs, rhs, acc, bm, bk, bn)
                        checks["tiles"] += 1
                    mr, nr = geo.m_range(a), geo.n_range(c)
                    rows, cols = mr[1] - mr[0], nr[1] - nr[0]
                    expect = dense_acc(prev_full[mr[0]:mr[1], :], p.weight[:, nr[0]:nr[1]])
                    if not np.array_equal(acc[:rows, :cols], expect):
                        raise SimError(f"layer {i} row {a} col-piece {c}: partial sums entering the "
                                       f"rightmost tile differ from the direct accumulation")
                    checks["psum_blocks"] += 1
                    bias = None
                    if p.bias is not None:
                        bias = np.zeros(k.W2, dtype=np.int32)
                        bias[:cols] = p.bias[nr[0]:nr[1]]
                    q = kernels.requantize(acc, bias, layer.shift, layer.has_relu)[:rows, :cols]
                    new_pieces[tiles[(a, geo.B - 1, c)]] = (mr, nr, q)
                    full[mr[0]:mr[1], nr[0]:nr[1]] = q
        pieces = new_pieces
        prev_full = full
        outs.append(full)
    # egress
    last = model.layers[-1]
    shape = (1, last.F) if last.kind == "aggregate" else (last.M, last.N)
    out = _Buffer((0, shape[0]), (0, shape[1]))
    eg = edges[-1]
    for n, ch in enumerate(eg.channels):
        if ch.src not in pieces:
            raise SimError(f"{eg.name} channel {n}: source tile {ch.src} holds no output")
        out.write(ch.rows, ch.cols, _slice(pieces[ch.src], ch.rows, ch.cols, eg.name), eg.name)
    out.verify(eg.name)
    return FunctionalResult(out.data.copy(), outs, checks)


def _wrap_add(a, b):
    s = a.astype(np.int64) + b.astype(np.int64)
    return (((s + 2**31) % 2**32) - 2**31).astype(np.int32)


def first_mismatch(got_layers, ref_layers):
    for i, (g, r) in enumerate(zip(got_layers, ref_layers)):
        if g.shape != r.shape:
            return Mismatch(i, -1, -1, -1, -1)
        diff = np.argwhere(g != r)
        if len(diff):
            rr, cc = diff[0]
            return Mismatch(i, int(rr), int(cc), int(g[rr, cc]), int(r[rr, cc]))
    return None
