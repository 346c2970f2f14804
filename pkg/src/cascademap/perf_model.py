"""Overhead-aware analytical latency model.

Per-layer compute follows the j-loop abstraction of the output-stationary
kernel (i and j unrolled by two, so one j-loop produces four B_M x B_N
blocks); inter-layer links are charged per their communication decision.
All reported terms are integral cycles; the end-to-end total is their sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .design import ceil_cycles, geometries


@dataclass(frozen=True)
class MappedLayer:
    index: int
    abc: tuple
    kernel: object
    in_kind: str = "dma"
    out_kind: str = "dma"
    br: bool = False


def jloop_count(k, arch):
    return k.H1 * k.W2 // (4 * arch.block_m * arch.block_n)


def j_loop_cycles(k, arch, profile, br=False):
    return 4 * k.W1 / arch.block_k + (profile.l_epi_br if br else profile.l_epi)


def single_aie_latency(k, arch, profile, variant=("dma", "dma"), br=False):
    """Latency of one kernel in cycles (float; callers ceil)."""
    return jloop_count(k, arch) * j_loop_cycles(k, arch, profile, br) + profile.overhead(*variant, br)


def chain_jloop_cycles(k, B, arch, profile, br=False):
    """Per-position j-loop latency along a K-dimension cascade chain of length B.

    Only the rightmost tile runs the bias/ReLU epilogue; every tile after the
    first pays the cascade interference term.
    """
    base = 4 * k.W1 / arch.block_k
    out = []
    for a in range(B):
        epi = profile.l_epi_br if (br and a == B - 1) else profile.l_epi
        out.append(base + epi + (profile.l_cas if a > 0 else 0.0))
    return out


def array_compute_latency(layer, arch, profile):
    k = layer.kernel
    B = layer.abc[1]
    lj = max(chain_jloop_cycles(k, B, arch, profile, layer.br))
    return (jloop_count(k, arch) + B - 1) * lj + profile.overhead(layer.in_kind, layer.out_kind, layer.br)


def dma_comm_latency(data_bits, distance, arch, profile):
    if data_bits < 0 or distance < 0:
        raise ValueError("data_bits and distance must be >= 0")
    return profile.l_init + -(-data_bits // arch.dma_bw) + arch.dma_hop_cycles * distance


def cascade_comm_latency(profile):
    return profile.o_cas


def shm_comm_latency(data_bits, arch, profile):
    return profile.shm_sync + -(-data_bits // arch.shm_bw)


def aggregation_ops(H1, W2, arch, method="mac"):
    """Vector instructions for the local reduction of an H1 x W2 INT8 block.

    ``mac``: the rows are the RHS of a (B_M x H1) x (H1 x W2) product whose LHS
    has a single row of ones, so each B_K-row group of a B_N column block is one
    MAC (two B_M-row blocks per instruction for INT8).
    ``baseline``: one extract/add/insert step per row of every output block.
    """
    col_blocks = -(-W2 // arch.block_n)
    if method == "mac":
        return -(-H1 // arch.block_k) * col_blocks
    if method == "baseline":
        return H1 * col_blocks
    raise ValueError(f"unknown aggregation method {method!r}")


def aggregation_hop_cycles(W2, arch, profile):
    # INT32 partial vector handed to the neighbour through a shared buffer
    return profile.shm_sync + -(-(W2 * 32) // arch.shm_bw)


def aggregation_local_cycles(H1, W2, arch, profile, method="mac"):
    ops = aggregation_ops(H1, W2, arch, method)
    per_op = 1.0 if method == "mac" else profile.row_op
    return profile.agg_o + ops * per_op


def aggregation_latency(H1, W2, A, reduce_kind, arch, profile, method="mac"):
    local = aggregation_local_cycles(H1, W2, arch, profile, method)
    total = local + (A - 1) * aggregation_hop_cycles(W2, arch, profile)
    if reduce_kind == "mean":
        total += profile.l_epi_br
    return total


def edge_latency(edge, arch, profile):
    """Communication cycles (float) of one edge under its decision."""
    if edge.decision == "dma":
        if profile.dma_size_mode == "total":
            size = edge.total_bits
        else:
            size = edge.max_bits
        return dma_comm_latency(size, edge.max_distance, arch, profile)
    if edge.decision == "cascade":
        if edge.src is None:
            # no producer compute to hide behind: the row payload streams in full
            return cascade_comm_latency(profile) + -(-edge.max_bits // arch.cascade_bw)
        return cascade_comm_latency(profile)
    if edge.decision == "shm":
        return shm_comm_latency(edge.max_bits, arch, profile)
    raise ValueError(f"unknown edge decision {edge.decision!r}")


@dataclass
class Term:
    name: str
    kind: str  # "compute" or "comm"
    cycles: int
    detail: dict = field(default_factory=dict)


@dataclass
class LatencyEstimate:
    terms: list
    freq_ghz: float

    @property
    def total_cycles(self):
        return sum(t.cycles for t in self.terms)

    @property
    def total_ns(self):
        return self.total_cycles / self.freq_ghz

    @property
    def compute_cycles(self):
        return [t.cycles for t in self.terms if t.kind == "compute"]

    @property
    def comm_cycles(self):
        return [t.cycles for t in self.terms if t.kind == "comm"]

    def term(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self):
        return {
            "total_cycles": self.total_cycles,
            "total_ns": round(self.total_ns, 3),
            "compute_cycles": sum(self.compute_cycles),
            "comm_cycles": sum(self.comm_cycles),
            "terms": [
                {"name": t.name, "kind": t.kind, "cycles": t.cycles, "detail": t.detail}
                for t in self.terms
            ],
        }

    def table(self):
        lines = [f"{'term':<18}{'kind':<9}{'cycles':>8}{'ns':>10}  detail"]
        for t in self.terms:
            det = ", ".join(f"{k}={v}" for k, v in t.detail.items())
            lines.append(f"{t.name:<18}{t.kind:<9}{t.cycles:>8}{t.cycles / self.freq_ghz:>10.1f}  {det}")
        lines.append(f"{'total':<27}{self.total_cycles:>8}{self.total_ns:>10.1f}")
        return "\n".join(lines)


def _r(x):
    return round(float(x), 3)


def end_to_end_latency(design, model, arch, profile):
    """Sum of per-layer compute and per-edge communication, boundary DMA included."""
    geos = geometries(model, design.mapping, arch)
    edges = design.comm.edges
    if len(edges) != len(model.layers) + 1:
        raise ValueError("comm plan must have one edge per layer boundary")
    terms = []
    for i, (layer, geo) in enumerate(zip(model.layers, geos)):
        e_in = edges[i]
        terms.append(_edge_term(e_in, arch, profile))
        if layer.kind == "dense":
            ml = MappedLayer(i, tuple(design.mapping[i]), geo.kernel, e_in.decision,
                             edges[i + 1].decision, layer.has_bias or layer.has_relu)
            raw = array_compute_latency(ml, arch, profile)
            lj = max(chain_jloop_cycles(geo.kernel, geo.B, arch, profile, ml.br))
            nj = jloop_count(geo.kernel, arch)
            detail = {
                "abc": "x".join(map(str, ml.abc)),
                "kernel": f"{geo.kernel.H1}x{geo.kernel.W1}x{geo.kernel.W2}",
                "jloops": nj + geo.B - 1,
                "jloop_cycles": _r(lj),
                "overhead": _r(profile.overhead(ml.in_kind, ml.out_kind, ml.br)),
            }
        else:
            raw = aggregation_latency(geo.H1, geo.W2, geo.A, layer.reduce_kind, arch, profile)
            detail = {
                "tiles": geo.A,
                "block": f"{geo.H1}x{geo.W2}",
                "reduce": layer.reduce_kind,
                "hop_cycles": _r(aggregation_hop_cycles(geo.W2, arch, profile)),
            }
        terms.append(Term(f"L{i}", "compute", ceil_cycles(raw), detail))
    terms.append(_edge_term(edges[-1], arch, profile))
    return LatencyEstimate(terms, arch.freq_ghz)


def _edge_term(edge, arch, profile):
    raw = edge_latency(edge, arch, profile)
    detail = {"decision": edge.decision}
    if edge.traffic:
        detail["traffic"] = "+".join(edge.traffic)
    if edge.decision != "cascade" or edge.src is None:
        detail["channels"] = len(edge.channels)
        detail["max_bits"] = edge.max_bits
    if edge.decision == "dma":
        detail["distance"] = edge.max_distance
    return Term(edge.name, "comm", ceil_cycles(raw), detail)

