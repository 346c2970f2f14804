"""Mapping enumeration, placement, communication planning and latency-optimal search."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .design import (
    AggGeometry,
    Channel,
    CommPlan,
    DesignError,
    DesignPoint,
    Edge,
    Placement,
    Rect,
    agg_tile,
    bits_of,
    ceil_cycles,
    dense_tile,
    geometries,
    is_pow2,
    layer_geometry,
    manhattan,
    partition_legal,
    read_design_dict,
)
from .perf_model import (
    MappedLayer,
    aggregation_latency,
    array_compute_latency,
    edge_latency,
    end_to_end_latency,
)


class PlacementError(DesignError):
    pass


class InfeasibleError(RuntimeError):
    """No mapping satisfies the constraints; ``constraint`` names the binding one."""

    def __init__(self, message, constraint):
        super().__init__(message)
        self.constraint = constraint


# ------------------------------------------------------------------ mappings

def _pow2_upto(limit):
    out, x = [], 1
    while x <= limit:
        out.append(x)
        x *= 2
    return out


def layer_candidates(layer, arch, force_c1=False, fit_grid=False):
    """Legal (A, B, C) for one dense layer in lexicographic order.

    ``fit_grid`` also drops triples whose A*C x B rectangle cannot fit the array.
    """
    p2 = _pow2_upto(arch.max_aies)
    out = []
    for a, b, c in itertools.product(p2, p2, p2):
        if a * b * c > arch.max_aies:
            continue
        if fit_grid and (a * c > arch.rows or b > arch.cols):
            continue
        if force_c1 and c != 1:
            continue
        if partition_legal(layer, (a, b, c), arch):
            out.append((a, b, c))
    return out


def _plio_used(mapping):
    a1, b1, _ = mapping[0]
    an, _, cn = mapping[-1]
    return a1 * b1 + an * cn


def _agg_next(model, i):
    return i + 1 < len(model.layers) and model.layers[i + 1].kind == "aggregate"


def check_mapping(model, mapping, arch):
    """Raise DesignError if a mapping violates a structural constraint."""
    if len(mapping) != len(model.layers):
        raise DesignError(f"mapping has {len(mapping)} entries for {len(model.layers)} layers")
    for i, (layer, abc) in enumerate(zip(model.layers, mapping)):
        if not all(is_pow2(x) for x in abc):
            raise DesignError(f"layer {i}: partition {abc} has a non-power-of-2 factor")
        if layer.kind == "dense":
            if not partition_legal(layer, abc, arch):
                raise DesignError(f"layer {i}: partition {abc} leaves too little work per tile")
            if _agg_next(model, i) and abc[2] != 1:
                raise DesignError(f"layer {i} feeds an aggregation and must have C = 1")
        elif tuple(abc) != (mapping[i - 1][0], 1, 1):
            raise DesignError(f"aggregation layer {i} must use ({mapping[i - 1][0]}, 1, 1)")
    total = sum(a * b * c for a, b, c in mapping)
    if total > arch.max_aies:
        raise DesignError(f"mapping uses {total} AIEs, budget is {arch.max_aies}")
    if _plio_used(mapping) > arch.plio:
        raise DesignError(f"mapping needs {_plio_used(mapping)} PLIO ports, budget is {arch.plio}")


def _candidate_lists(model, arch, fit_grid=False):
    cands = []
    for i, layer in enumerate(model.layers):
        if layer.kind == "dense":
            cands.append(layer_candidates(layer, arch, _agg_next(model, i), fit_grid))
        else:
            cands.append(None)
    return cands


def enumerate_mappings(model, arch):
    """Yield every legal mapping, lexicographic per layer, pruned by the AIE budget."""
    cands = _candidate_lists(model, arch)
    n = len(model.layers)
    min_rest = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        if cands[i] is None:
            step = 1
        else:
            step = min((a * b * c for a, b, c in cands[i]), default=10**9)
        min_rest[i] = min_rest[i + 1] + step

    def rec(i, prefix, used):
        if i == n:
            if _plio_used(prefix) <= arch.plio:
                yield tuple(prefix)
            return
        if cands[i] is None:
            opts = [(prefix[-1][0], 1, 1)]
        else:
            opts = cands[i]
        for abc in opts:
            t = abc[0] * abc[1] * abc[2]
            if used + t + min_rest[i + 1] > arch.max_aies:
                continue
            prefix.append(abc)
            yield from rec(i + 1, prefix, used + t)
            prefix.pop()

    yield from rec(0, [], 0)


# ------------------------------------------------------------------ traffic

@dataclass(frozen=True)
class Traffic:
    kind: str  # one-to-one | duplicate | partition | gather | mixed
    members: frozenset

    def labels(self):
        if self.kind == "mixed":
            return ("mixed",) + tuple(sorted(self.members))
        return (self.kind,)


def cascade_eligible(prev, nxt):
    A, _, C = prev
    A2, _, C2 = nxt
    return A == A2 and C == 1 and C2 == 1


def classify_traffic(prev, nxt):
    A, _, C = prev
    A2, B2, C2 = nxt
    members = set()
    if C2 > 1:
        members.add("duplicate")
    if A2 > A or B2 > C:
        members.add("partition")
    if A2 < A or B2 < C:
        members.add("gather")
    if not members:
        return Traffic("one-to-one", frozenset())
    if len(members) == 1:
        return Traffic(next(iter(members)), frozenset(members))
    return Traffic("mixed", frozenset(members))


# ------------------------------------------------------------------ placement

def _place_one(occ, model, i, abc, geo, rects):
    layer = model.layers[i]
    if layer.kind == "aggregate":
        prev = rects[i - 1]
        rect = Rect(prev.row, prev.col_end, geo.A, 1)
        if rect.col_end > occ.shape[1] or occ[rect.row:rect.row_end, rect.col].any():
            raise PlacementError(f"aggregation layer {i}: column east of layer {i - 1} is not free")
        return rect
    h, w = geo.rows, geo.cols
    r, c = kernels.find_bottom_left(occ, h, w)
    if r < 0:
        raise PlacementError(f"layer {i}: no free {h}x{w} region")
    return Rect(r, c, h, w)


def _adjacent(model, i, rects):
    """Edge (i-1 -> i): consumer directly east of the producer's output tiles, rows aligned."""
    p, q = rects[i - 1], rects[i]
    if q.col != p.col_end:
        return False
    if model.layers[i - 1].kind == "aggregate":
        # the reduced vector leaves from the chain's final (bottom) tile
        return q.row == p.row and q.height == 1
    return q.row == p.row and q.height == p.height


def place_layers(model, mapping, arch):
    """Deterministic bottom-left placement in model order; raises PlacementError."""
    geos = geometries(model, mapping, arch)
    occ = np.zeros((arch.rows, arch.cols), dtype=np.uint8)
    rects = []
    for i, (abc, geo) in enumerate(zip(mapping, geos)):
        rect = _place_one(occ, model, i, abc, geo, rects)
        occ[rect.row:rect.row_end, rect.col:rect.col_end] = 1
        rects.append(rect)
    adjacency = tuple(_adjacent(model, i, rects) for i in range(1, len(rects)))
    placement = Placement(tuple(rects), (arch.rows, arch.cols), adjacency)
    check_placement(placement, mapping)
    return placement


def check_placement(placement, mapping):
    rows, cols = placement.grid
    rects = placement.rects
    for i, r in enumerate(rects):
        if r.row < 0 or r.col < 0 or r.row_end > rows or r.col_end > cols:
            raise PlacementError(f"layer {i} rectangle {r.as_list()} exceeds the {rows}x{cols} grid")
        a, b, c = mapping[i]
        if r.height * r.width != a * b * c:
            raise PlacementError(f"layer {i} rectangle {r.as_list()} does not hold {a * b * c} tiles")
    for i, j in itertools.combinations(range(len(rects)), 2):
        if rects[i].overlaps(rects[j]):
            raise PlacementError(f"layers {i} and {j} overlap")


# ------------------------------------------------------------------ comm plan

def _overlap(r1, r2):
    lo, hi = max(r1[0], r2[0]), min(r1[1], r2[1])
    return (lo, hi) if hi > lo else None


def _output_pieces(model, i, geo, rect, abc):
    """(tile, rows, cols) for every piece of layer i's output."""
    if model.layers[i].kind == "aggregate":
        return [(agg_tile(rect, 0), (0, 1), (0, geo.F))]
    out = []
    for a in range(geo.A):
        for c in range(geo.C):
            out.append((dense_tile(rect, abc, a, geo.B - 1, c), geo.m_range(a), geo.n_range(c)))
    return out


def _edge_between(model, i, geos, mapping, rects, adjacency, cascade_ok=True):
    """Edge from layer i-1 into layer i."""
    prev_geo, geo = geos[i - 1], geos[i]
    prev_rect, rect = rects[i - 1], rects[i]
    layer = model.layers[i]
    if layer.kind == "aggregate":
        chans = []
        for a in range(geo.A):
            src = dense_tile(prev_rect, mapping[i - 1], a, prev_geo.B - 1, 0)
            dst = agg_tile(rect, a)
            rows = prev_geo.m_range(a)
            cols = (0, prev_geo.N)
            chans.append(Channel(src, (dst,), rows, cols, bits_of(rows, cols), manhattan(src, dst)))
        return Edge(i - 1, i, "shm", ("one-to-one",), tuple(chans))

    prev_abc = (1, 1, 1) if isinstance(prev_geo, AggGeometry) else tuple(mapping[i - 1])
    abc = tuple(mapping[i])
    traffic = classify_traffic(prev_abc, abc).labels()
    pieces = _output_pieces(model, i - 1, prev_geo, prev_rect, mapping[i - 1])
    use_cascade = cascade_ok and cascade_eligible(prev_abc, abc) and adjacency[i - 1]
    chans = []
    if use_cascade:
        for a, (src, rows, cols) in enumerate(pieces):
            dsts = tuple(dense_tile(rect, abc, a, b, 0) for b in range(geo.B))
            chans.append(Channel(src, dsts, rows, cols, bits_of(rows, cols), 1))
        return Edge(i - 1, i, "cascade", traffic, tuple(chans))
    for src, rows, cols in pieces:
        for a in range(geo.A):
            r = _overlap(rows, geo.m_range(a))
            if r is None:
                continue
            for b in range(geo.B):
                k = _overlap(cols, geo.k_range(b))
                if k is None:
                    continue
                dsts = tuple(dense_tile(rect, abc, a, b, c) for c in range(geo.C))
                dist = max(manhattan(src, d) for d in dsts)
                chans.append(Channel(src, dsts, r, k, bits_of(r, k), dist))
    return Edge(i - 1, i, "dma", traffic, tuple(chans))


def _weight_channels(geo, rect, abc):
    chans = []
    for b in range(geo.B):
        for c in range(geo.C):
            dsts = tuple(dense_tile(rect, abc, a, b, c) for a in range(geo.A))
            kr, nr = geo.k_range(b), geo.n_range(c)
            chans.append(Channel(None, dsts, kr, nr, bits_of(kr, nr), max(d[0] for d in dsts), "weight"))
    return chans


def _ingress_edge(model, geos, mapping, rects, kind, weight_dma):
    geo, rect, abc = geos[0], rects[0], tuple(mapping[0])
    chans = []
    if kind == "cascade":
        for a in range(geo.A):
            for c in range(geo.C):
                dsts = tuple(dense_tile(rect, abc, a, b, c) for b in range(geo.B))
                rows, cols = geo.m_range(a), (0, geo.K)
                chans.append(Channel(None, dsts, rows, cols, bits_of(rows, cols), 0))
    else:
        for a in range(geo.A):
            for b in range(geo.B):
                dsts = tuple(dense_tile(rect, abc, a, b, c) for c in range(geo.C))
                rows, cols = geo.m_range(a), geo.k_range(b)
                chans.append(Channel(None, dsts, rows, cols, bits_of(rows, cols), max(d[0] for d in dsts)))
    if weight_dma:
        chans.extend(_weight_channels(geo, rect, abc))
    traffic = ("duplicate",) if geo.C > 1 else ("one-to-one",)
    return Edge(None, 0, kind, traffic, tuple(chans))


def _egress_edge(model, geos, mapping, rects, kind):
    n = len(model.layers) - 1
    chans = []
    for src, rows, cols in _output_pieces(model, n, geos[n], rects[n], mapping[n]):
        dist = 0 if kind == "cascade" else src[0]
        chans.append(Channel(src, (), rows, cols, bits_of(rows, cols), dist))
    return Edge(n, None, kind, ("one-to-one",), tuple(chans))


def build_comm_plan(model, mapping, placement, arch, ingress="dma", egress="dma",
                    weight_dma=(), allow_cascade=True):
    geos = geometries(model, mapping, arch)
    rects = placement.rects
    wd = tuple(weight_dma) or (False,) * len(model.layers)
    edges = [_ingress_edge(model, geos, mapping, rects, ingress, wd[0])]
    for i in range(1, len(model.layers)):
        edge = _edge_between(model, i, geos, mapping, rects, placement.adjacency, allow_cascade)
        if wd[i] and model.layers[i].kind == "dense":
            edge = Edge(edge.src, edge.dst, edge.decision, edge.traffic,
                        edge.channels + tuple(_weight_channels(geos[i], rects[i], mapping[i])))
        edges.append(edge)
    edges.append(_egress_edge(model, geos, mapping, rects, egress))
    plan = CommPlan(tuple(edges))
    check_comm_plan(plan, model, mapping)
    return plan


def check_comm_plan(plan, model, mapping):
    for e in plan.edges:
        if e.decision == "cascade" and e.src is not None and e.dst is not None:
            prev = (1, 1, 1) if model.layers[e.src].kind == "aggregate" else mapping[e.src]
            if not cascade_eligible(prev, mapping[e.dst]):
                raise DesignError(f"edge {e.name} uses cascade but partitions are not cascade-compatible")
            if "duplicate" in e.traffic:
                raise DesignError(f"edge {e.name}: cascade edge cannot carry duplicated traffic")
        if e.dst is not None and model.layers[e.dst].kind == "dense" and not e.channels:
            raise DesignError(f"edge {e.name} has no channels")


# ------------------------------------------------------------------ designs

def make_design(model, mapping, arch, profile=None, ingress="dma", egress="dma", weight_dma=(),
                allow_cascade=True):
    mapping = tuple(tuple(int(x) for x in m) for m in mapping)
    check_mapping(model, mapping, arch)
    placement = place_layers(model, mapping, arch)
    comm = build_comm_plan(model, mapping, placement, arch, ingress, egress, weight_dma, allow_cascade)
    design = DesignPoint(model.name, mapping, placement, comm, ingress, egress, tuple(weight_dma))
    if profile is not None:
        design.estimate = end_to_end_latency(design, model, arch, profile)
    return design


def design_from_dict(d, model, arch, profile=None):
    """Rebuild a design from its file form, checking the stored placement."""
    if d.get("model") not in (None, model.name):
        raise DesignError(f"design is for model {d.get('model')!r}, not {model.name!r}")
    mapping = tuple(tuple(int(x) for x in m) for m in d["mapping"])
    check_mapping(model, mapping, arch)
    rects = tuple(Rect(*map(int, r)) for r in d["placement"])
    grid = tuple(d.get("grid", (arch.rows, arch.cols)))
    if grid != (arch.rows, arch.cols):
        raise DesignError(f"design grid {grid} does not match arch {(arch.rows, arch.cols)}")
    adjacency = tuple(_adjacent(model, i, rects) for i in range(1, len(rects)))
    placement = Placement(rects, grid, adjacency)
    check_placement(placement, mapping)
    for i, layer in enumerate(model.layers):
        if layer.kind == "aggregate":
            p = rects[i - 1]
            if (rects[i].row, rects[i].col) != (p.row, p.col_end):
                raise PlacementError(f"aggregation layer {i} must sit directly east of layer {i - 1}")
    ingress, egress = d.get("ingress", "dma"), d.get("egress", "dma")
    weight_dma = tuple(d.get("weight_dma", ()))
    comm = build_comm_plan(model, mapping, placement, arch, ingress, egress, weight_dma)
    stored = d.get("edges")
    if stored:
        for e, s in zip(comm.edges, stored):
            if s.get("decision") not in (None, e.decision):
                raise DesignError(f"edge {e.name}: stored decision {s['decision']!r} "
                                  f"disagrees with rebuilt {e.decision!r}")
    design = DesignPoint(model.name, mapping, placement, comm, ingress, egress, weight_dma)
    if profile is not None:
        design.estimate = end_to_end_latency(design, model, arch, profile)
    return design


def load_design(path, model, arch, profile=None):
    with open(path) as fh:
        return design_from_dict(read_design_dict(fh.read()), model, arch, profile)


# ------------------------------------------------------------------ search

@dataclass
class SearchResult:
    best: DesignPoint
    ranked: list
    nodes: int = 0
    leaves: int = 0
    stats: dict = field(default_factory=dict)


def _rank_key(total, design_mapping):
    aies = sum(a * b * c for a, b, c in design_mapping)
    vec = tuple(x for abc in design_mapping for x in abc)
    return (total, aies, vec)


class _Searcher:
    """Depth-first branch and bound over per-layer partitions.

    The bound for a partial design is its exact cost so far plus a dynamic
    program over the remaining layers that relaxes placement (DMA distance
    taken as one hop, cascade assumed available whenever partitions allow it)
    and the PLIO/AIE budgets. Both relaxations only lower the bound, so the
    search returns exactly what exhaustive enumeration would.
    """

    def __init__(self, model, arch, profile, topk, allow_cascade):
        self.model, self.arch, self.profile = model, arch, profile
        self.topk = max(1, topk)
        self.allow_cascade = allow_cascade
        self.n = len(model.layers)
        self.cands = _candidate_lists(model, arch, fit_grid=True)
        for i, c in enumerate(self.cands):
            if c is not None and not c:
                raise InfeasibleError(f"layer {i} has no legal partition on this array",
                                      "per-tile minimum work")
        self.heap = []  # max-heap on rank key via negation
        self.nodes = 0
        self.leaves = 0
        self._prep_bounds()

    # -- per-layer option lists (aggregation options depend on the producer)
    def options(self, i, prev_abc):
        if self.cands[i] is None:
            return [(prev_abc[0], 1, 1)]
        return self.cands[i]

    @lru_cache(maxsize=None)
    def geo(self, i, abc):
        layer = self.model.layers[i]
        if layer.kind == "dense":
            return layer_geometry(layer, abc, self.arch)
        # producer H1/W2 depend only on its A (C is 1)
        pg = layer_geometry(self.model.layers[i - 1], (abc[0], 1, 1), self.arch)
        return AggGeometry(layer.M, layer.F, abc[0], pg.kernel.H1, pg.kernel.W2)

    @lru_cache(maxsize=None)
    def compute_cost(self, i, abc, in_kind, out_kind):
        layer = self.model.layers[i]
        g = self.geo(i, abc)
        if layer.kind == "dense":
            ml = MappedLayer(i, abc, g.kernel, in_kind, out_kind, layer.has_bias or layer.has_relu)
            return ceil_cycles(array_compute_latency(ml, self.arch, self.profile))
        return ceil_cycles(aggregation_latency(g.H1, g.W2, g.A, layer.reduce_kind, self.arch, self.profile))

    # -- lower bounds
    def _pair_max_bits(self, i, prev_abc, abc):
        """Max DMA channel payload into layer i, from partitions alone."""
        pg, g = self.geo(i - 1, prev_abc), self.geo(i, abc)
        if isinstance(pg, AggGeometry):
            rows_p, cols_p = [(0, 1)], [(0, pg.F)]
        else:
            rows_p = [pg.m_range(a) for a in range(pg.A)]
            cols_p = [pg.n_range(c) for c in range(pg.C)]
        rows_q = [g.m_range(a) for a in range(g.A)]
        cols_q = [g.k_range(b) for b in range(g.B)]

        def best(xs, ys):
            m = 0
            for x in xs:
                for y in ys:
                    o = _overlap(x, y)
                    if o:
                        m = max(m, o[1] - o[0])
            return m

        if self.profile.dma_size_mode == "total":
            rows = pg.M if not isinstance(pg, AggGeometry) else 1
            cols = pg.N if not isinstance(pg, AggGeometry) else pg.F
            return rows * cols * 8
        return best(rows_p, rows_q) * best(cols_p, cols_q) * 8

    @lru_cache(maxsize=None)
    def edge_lb(self, i, prev_abc, abc):
        """[(decision, cost lower bound)] for the edge into layer i."""
        layer = self.model.layers[i]
        p, a = self.profile, self.arch
        if layer.kind == "aggregate":
            g = self.geo(i - 1, prev_abc)
            bits = max(r[1] - r[0] for r in (g.m_range(x) for x in range(g.A))) * g.N * 8
            return [("shm", ceil_cycles(p.shm_sync + -(-bits // a.shm_bw)))]
        prev_kind_abc = (1, 1, 1) if self.model.layers[i - 1].kind == "aggregate" else prev_abc
        bits = self._pair_max_bits(i, prev_abc, abc)
        out = [("dma", ceil_cycles(p.l_init + -(-bits // a.dma_bw) + a.dma_hop_cycles * 1))]
        if self.allow_cascade and cascade_eligible(prev_kind_abc, abc):
            out.append(("cascade", ceil_cycles(p.o_cas)))
        return out

    def egress_lb(self, i, abc):
        g = self.geo(i, abc)
        p, a = self.profile, self.arch
        if isinstance(g, AggGeometry):
            return ceil_cycles(p.l_init + -(-(g.F * 8) // a.dma_bw))
        rows = max(r[1] - r[0] for r in (g.m_range(x) for x in range(g.A)))
        cols = max(r[1] - r[0] for r in (g.n_range(x) for x in range(g.C)))
        if p.dma_size_mode == "total":
            bits = g.M * g.N * 8
        else:
            bits = rows * cols * 8
        return ceil_cycles(p.l_init + -(-bits // a.dma_bw) + a.dma_hop_cycles * (g.rows - 1))

    def _prep_bounds(self):
        """rest[i][(abc, in_kind)] = lower bound on everything from layer i's compute onwards."""
        n = self.n
        opts = [None] * n
        # aggregation options are determined by the producer's A
        for i in range(n):
            if self.cands[i] is not None:
                opts[i] = list(self.cands[i])
            else:
                opts[i] = sorted({(abc[0], 1, 1) for abc in opts[i - 1]})
        self.opts = opts
        kinds = ("dma", "cascade", "shm")
        rest = [dict() for _ in range(n)]
        for i in range(n - 1, -1, -1):
            for abc in opts[i]:
                for k_in in kinds:
                    if i == n - 1:
                        val = self.compute_cost(i, abc, k_in, "dma") + self.egress_lb(i, abc)
                    else:
                        val = None
                        for nxt in self.options(i + 1, abc):
                            for dec, c in self.edge_lb(i + 1, abc, nxt):
                                tail = rest[i + 1].get((nxt, dec))
                                if tail is None:
                                    continue
                                v = self.compute_cost(i, abc, k_in, dec) + c + tail
                                if val is None or v < val:
                                    val = v
                    if val is not None:
                        rest[i][(abc, k_in)] = val
        self.rest = rest
        self.min_aies = [0] * (n + 1)
        for i in range(n - 1, -1, -1):
            self.min_aies[i] = self.min_aies[i + 1] + min(a * b * c for a, b, c in opts[i])
        self.min_plio_tail = min(a * c for a, _, c in opts[-1])

    # -- incumbent handling
    def _push(self, key, mapping):
        # heap of the k best (smallest) keys; stored negated on the numeric parts
        neg = (-key[0], -key[1], _Rev(key[2]), mapping)
        if len(self.heap) < self.topk:
            heapq.heappush(self.heap, neg)
        elif key < (-self.heap[0][0], -self.heap[0][1], self.heap[0][2].v):
            heapq.heapreplace(self.heap, neg)

    def _pruned(self, bound, aies_lb):
        if len(self.heap) < self.topk:
            return False
        worst = self.heap[0]
        wl, wa = -worst[0], -worst[1]
        if bound > wl:
            return True
        return bound == wl and aies_lb > wa

    # -- search
    def run(self):
        arch = self.arch
        occ = np.zeros((arch.rows, arch.cols), dtype=np.uint8)
        self._dfs(0, [], [], occ, 0, 0, None)
        found = sorted(((-h[0], -h[1], h[2].v), h[3]) for h in self.heap)
        return found

    def _dfs(self, i, mapping, rects, occ, cost, aies, in_kind):
        self.nodes += 1
        model, arch = self.model, self.arch
        if i == self.n:
            return
        prev = mapping[-1] if mapping else None
        scored = []
        for abc in self.options(i, prev):
            t = abc[0] * abc[1] * abc[2]
            if aies + t + self.min_aies[i + 1] > arch.max_aies:
                continue
            if i == 0 and abc[0] * abc[1] + self.min_plio_tail > arch.plio:
                continue
            if i == self.n - 1 and _plio_used(mapping + [abc]) > arch.plio:
                continue
            if i == 0:
                lb = self.rest[0].get((abc, "dma"))
                if lb is None:
                    continue
                scored.append((lb, abc))
            else:
                best = None
                for dec, c in self.edge_lb(i, prev, abc):
                    r = self.rest[i].get((abc, dec))
                    if r is None:
                        continue
                    v = self.compute_cost(i - 1, prev, in_kind, dec) + c + r
                    best = v if best is None or v < best else best
                if best is None:
                    continue
                scored.append((best, abc))
        scored.sort()
        for lb, abc in scored:
            t = abc[0] * abc[1] * abc[2]
            if self._pruned(cost + lb, aies + t + self.min_aies[i + 1]):
                continue
            g = self.geo(i, abc)
            try:
                rect = _place_one(occ, model, i, abc, g, rects)
            except PlacementError:
                continue
            new_rects = rects + [rect]
            new_map = mapping + [abc]
            occ[rect.row:rect.row_end, rect.col:rect.col_end] = 1
            try:
                self._expand(i, new_map, new_rects, occ, cost, aies + t, in_kind)
            finally:
                occ[rect.row:rect.row_end, rect.col:rect.col_end] = 0

    def _expand(self, i, mapping, rects, occ, cost, aies, in_kind):
        # geometry and adjacency are passed as {layer: value} dicts
        model, arch, profile = self.model, self.arch, self.profile
        tmap = tuple(mapping)
        if i == 0:
            geos = {0: self.geo(0, tmap[0])}
            edge = _ingress_edge(model, geos, tmap, rects, "dma", False)
            cost += ceil_cycles(edge_latency(edge, arch, profile))
            new_in = "dma"
        else:
            geos = {i - 1: self.geo(i - 1, tmap[i - 1]), i: self.geo(i, tmap[i])}
            adjacency = {i - 1: _adjacent(model, i, rects)}
            edge = _edge_between(model, i, geos, tmap, rects, adjacency, self.allow_cascade)
            cost += ceil_cycles(edge_latency(edge, arch, profile))
            cost += self.compute_cost(i - 1, tmap[i - 1], in_kind, edge.decision)
            new_in = edge.decision
        if i == self.n - 1:
            last_geo = self.geo(i, tmap[i])
            eg = _egress_edge(model, {i: last_geo}, tmap, rects, "dma")
            total = cost + self.compute_cost(i, tmap[i], new_in, "dma") + ceil_cycles(edge_latency(eg, arch, profile))
            self.leaves += 1
            key = _rank_key(total, tmap)
            self._push(key, tmap)
            return
        rest_lb = self.rest[i].get((tmap[i], new_in))
        if rest_lb is None:
            return
        # cost so far excludes layer i's compute, which rest_lb covers
        if self._pruned(cost + rest_lb, aies + self.min_aies[i + 1]):
            return
        self._dfs(i + 1, mapping, rects, occ, cost, aies, new_in)


class _Rev:
    """Reverses ordering for lexicographic tie-breaking inside the max-heap."""

    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v

    def __lt__(self, other):
        return self.v > other.v

    def __eq__(self, other):
        return self.v == other.v


def search(model, arch, profile, topk=1, allow_cascade=True):
    """Minimum-latency design; ties go to fewer AIEs, then the smaller mapping vector."""
    _check_feasible_budget(model, arch)
    s = _Searcher(model, arch, profile, topk, allow_cascade)
    found = s.run()
    if not found:
        raise InfeasibleError(
            f"no mapping of {model.name!r} can be placed on the {arch.rows}x{arch.cols} array "
            f"(AIE budget {arch.max_aies}, PLIO {arch.plio})", "placement")
    ranked = []
    for key, mapping in found:
        d = make_design(model, mapping, arch, profile, allow_cascade=allow_cascade)
        if d.estimate.total_cycles != key[0]:
            raise AssertionError(f"search cost {key[0]} disagrees with model {d.estimate.total_cycles}")
        ranked.append(d)
    return SearchResult(ranked[0], ranked, s.nodes, s.leaves,
                        {"nodes": s.nodes, "leaves": s.leaves})


def _check_feasible_budget(model, arch):
    cands = _candidate_lists(model, arch)
    min_aies = 0
    for i, c in enumerate(cands):
        if c is None:
            min_aies += 1
            continue
        if not c:
            raise InfeasibleError(f"layer {i} has no legal partition on a {arch.rows}x{arch.cols} array",
                                  "AIE budget")
        min_aies += min(a * b * cc for a, b, cc in c)
    if min_aies > arch.max_aies:
        raise InfeasibleError(f"model {model.name!r} needs at least {min_aies} AIEs; AIE budget is "
                              f"{arch.max_aies}", "AIE budget")
    first = cands[0]
    last = cands[-1] if cands[-1] is not None else [(1, 1, 1)]
    if min(a * b for a, b, _ in first) + min(a * c for a, _, c in last) > arch.plio:
        raise InfeasibleError(f"model {model.name!r} needs more PLIO ports than the {arch.plio} available",
                              "PLIO budget")


def exhaustive_search(model, arch, profile, allow_cascade=True):
    """Score every enumerated, placeable mapping; used to cross-check :func:`search`."""
    scored = []
    for mapping in enumerate_mappings(model, arch):
        try:
            d = make_design(model, mapping, arch, profile, allow_cascade=allow_cascade)
        except PlacementError:
            continue
        scored.append((_rank_key(d.estimate.total_cycles, d.mapping), d))
    scored.sort(key=lambda t: t[0])
    return [d for _, d in scored]
