"""Global aggregation over M rows spread across a column of tiles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import simpy

from .. import kernels
from ..design import cdiv, piece_range, round_up, split_ok
from ..perf_model import aggregation_hop_cycles, aggregation_local_cycles
from .oracle import mean_round


@dataclass
class AggResult:
    sums: np.ndarray  # (1, F) int32, after the mean division when reducing by mean
    output: np.ndarray  # (1, F) int8 after requantization
    cycles: float
    tile_finish: list


def _reduce_mac(block, arch):
    # rows of the block become the RHS; a single row of ones on the LHS sums them
    bm, bk, bn = arch.block_m, arch.block_k, arch.block_n
    h = round_up(max(block.shape[0], 1), bk)
    w2 = round_up(block.shape[1], 2 * bn)
    rhs = np.zeros((h, w2), dtype=np.int8)
    rhs[:block.shape[0], :block.shape[1]] = block
    lhs = np.zeros((2 * bm, h), dtype=np.int8)
    lhs[0, :block.shape[0]] = 1
    return kernels.blocked_matmul(lhs, rhs, None, bm, bk, bn)[0:1, :block.shape[1]]


def _reduce_rows(block):
    # baseline: extract each row and add it into an accumulator vector
    acc = np.zeros((1, block.shape[1]), dtype=np.int64)
    for r in range(block.shape[0]):
        acc[0] += block[r].astype(np.int64)
    return acc.astype(np.int32)


def simulate_aggregation(phi_output, tiles, arch, profile, reduce_kind="sum", method="mac", shift=0):
    """Reduce an M x F INT8 block over ``tiles`` stacked tiles; returns values and cycles.

    Tile ``a`` holds rows ``piece_range(M, tiles, a)``; partial vectors flow from
    the top tile down to tile 0, which alone applies the mean division.
    """
    x = np.asarray(phi_output, dtype=np.int8)
    m, f = x.shape
    if tiles < 1 or not split_ok(m, tiles, 1):
        raise ValueError(f"cannot spread {m} rows over {tiles} tiles")
    h1 = round_up(cdiv(m, tiles), 2 * arch.block_m)
    w2 = round_up(f, 2 * arch.block_n)
    local = aggregation_local_cycles(h1, w2, arch, profile, method)
    hop = aggregation_hop_cycles(w2, arch, profile)

    partials = []
    for a in range(tiles):
        lo, hi = piece_range(m, tiles, a)
        blk = x[lo:hi]
        partials.append(_reduce_mac(blk, arch) if method == "mac" else _reduce_rows(blk))

    env = simpy.Environment()
    chain = [simpy.Store(env, capacity=1) for _ in range(tiles)]
    finish = [None] * tiles
    result = {}

    def tile(a):
        yield env.timeout(local)
        acc = partials[a].astype(np.int64)
        if a < tiles - 1:
            upstream = yield chain[a].get()
            acc = acc + upstream
        if a > 0:
            yield env.timeout(hop)
            yield chain[a - 1].put(acc)
        else:
            acc = ((acc + 2**31) % 2**32) - 2**31
            if reduce_kind == "mean":
                yield env.timeout(profile.l_epi_br)
                acc = mean_round(acc, m)
            result["acc"] = acc.astype(np.int32)
        finish[a] = env.now

    for a in range(tiles):
        env.process(tile(a))
    env.run()
    if "acc" not in result:
        raise RuntimeError("aggregation chain did not complete")
    sums = result["acc"]
    out = kernels.requantize(sums, None, shift, False)
    return AggResult(sums, out, env.now, finish)
