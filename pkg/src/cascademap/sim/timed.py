"""Discrete-event timing of one input sample through a mapped design.

Granularity is the j-loop and the transfer word. Partial sums move along a
row's cascade chain as one token per j-loop (eight 512-bit words in the
producer's trailing cycles). Inter-layer cascade traffic is word level
through a bounded FIFO: the producer's rightmost tile emits its output words
in the last cycles of each j-loop, and the consumer row relays them cut-through,
each tile keeping its own slice. DMA transfers start when the source tile
finishes and complete after the channel latency. Shared-memory links carry
producer rows into aggregation tiles and partial vectors down the reduction
chain.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

import simpy

from ..design import AggGeometry, agg_tile, dense_tile, geometries
from ..perf_model import (
    aggregation_hop_cycles,
    aggregation_local_cycles,
    chain_jloop_cycles,
    jloop_count,
)

EPS = 1e-9


class InvariantError(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    def __init__(self, message, blocked):
        super().__init__(message)
        self.blocked = blocked


@dataclass
class LinkRecord:
    kind: str  # cascade | psum | dma | shm
    cap_bits: int
    intervals: list = field(default_factory=list)  # (start, end, bits)
    put: int = 0
    got: int = 0
    max_occupancy: int = 0

    @property
    def bits(self):
        return sum(b for _, _, b in self.intervals)


@dataclass
class SimTrace:
    end_time: float
    layer_intervals: dict
    links: dict
    events: list
    tile_phases: dict

    @property
    def end_cycles(self):
        return int(math.ceil(round(self.end_time, 6)))

    def end_ns(self, arch):
        return self.end_cycles / arch.freq_ghz

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "entity", "event", "payload_bits"])
        for t, ent, kind, bits in self.events:
            w.writerow([f"{t:.3f}", ent, kind, bits])
        return buf.getvalue()

    def summary(self):
        util = {}
        for name, rec in sorted(self.links.items()):
            busy = sum(e - s for s, e, _ in rec.intervals)
            util[name] = {"kind": rec.kind, "bits": rec.bits, "busy_cycles": round(busy, 3),
                          "max_occupancy": rec.max_occupancy}
        return {
            "end_cycles": self.end_cycles,
            "layers": {f"L{i}": [round(s, 3), round(e, 3)] for i, (s, e) in sorted(self.layer_intervals.items())},
            "links": util,
        }


class _Fifo:
    """Bounded word FIFO on a cascade link with occupancy bookkeeping."""

    def __init__(self, env, rec, depth):
        self.env, self.rec, self.depth = env, rec, depth
        self.store = simpy.Store(env, capacity=depth)

    def put(self, item):
        ev = self.store.put(item)
        ev.callbacks.append(self._after_put)
        return ev

    def _after_put(self, _):
        self.rec.put += 1
        occ = len(self.store.items)
        self.rec.max_occupancy = max(self.rec.max_occupancy, occ)
        if occ > self.depth:
            raise InvariantError(f"cascade FIFO occupancy {occ} exceeds depth {self.depth}")

    def get(self):
        ev = self.store.get()
        ev.callbacks.append(self._after_get)
        return ev

    def _after_get(self, _):
        self.rec.got += 1


class _TimedSim:
    def __init__(self, design, model, arch, profile):
        self.design, self.model, self.arch, self.profile = design, model, arch, profile
        self.env = simpy.Environment()
        self.geos = geometries(model, design.mapping, arch)
        self.events = []
        self.links = {}
        self.done = {}  # (layer, tile) -> Event
        self.ready = {}
        self.pending = {}
        self.arrivals = defaultdict(list)
        self.phases = defaultdict(list)
        self.egress_end = []
        self.egress_expected = 0
        self.word_bits = arch.cascade_bw
        self.out_fifo = {}  # (layer, tile) -> _Fifo fed by that tile's output words

    # -- helpers
    def log(self, entity, kind, bits=0):
        self.events.append((self.env.now, entity, kind, bits))

    def link(self, name, kind, cap):
        if name not in self.links:
            self.links[name] = LinkRecord(kind, cap)
        return self.links[name]

    def arrive(self, layer, tile, source):
        key = (layer, tile)
        self.arrivals[key].append((self.env.now, source))
        self.pending[key] -= 1
        if self.pending[key] == 0:
            self.ready[key].succeed(self.env.now)
        elif self.pending[key] < 0:
            raise InvariantError(f"tile {tile} of layer {layer} received more inputs than expected")

    def tiles_of(self, i):
        geo, rect, abc = self.geos[i], self.design.placement.rects[i], self.design.mapping[i]
        if isinstance(geo, AggGeometry):
            return [((a,), agg_tile(rect, a)) for a in range(geo.A)]
        return [((a, b, c), dense_tile(rect, abc, a, b, c))
                for a in range(geo.A) for b in range(geo.B) for c in range(geo.C)]

    def words_per_jloop(self):
        a = self.arch
        return -(-(4 * a.block_m * a.block_n * 8) // self.word_bits)

    def psum_words(self):
        a = self.arch
        return -(-(4 * a.block_m * a.block_n * 32) // self.word_bits)

    # -- setup
    def build(self):
        env, model, edges = self.env, self.model, self.design.comm.edges
        for i in range(len(model.layers)):
            for _, t in self.tiles_of(i):
                self.done[(i, t)] = env.event()
                self.ready[(i, t)] = env.event()
                self.pending[(i, t)] = 0
        for i, edge in enumerate(edges):
            self._wire_edge(i, edge)
        for i, layer in enumerate(model.layers):
            if layer.kind == "dense":
                self._start_dense(i)
            else:
                self._start_agg(i)

    def _wire_edge(self, idx, edge):
        dst_layer = edge.dst
        src_layer = edge.src
        for n, ch in enumerate(edge.channels):
            name = f"{edge.name}#{n}"
            if dst_layer is not None:
                for d in ch.dsts:
                    self.pending[(dst_layer, d)] += 1
            else:
                self.egress_expected += 1
            if edge.decision == "dma":
                self.env.process(self._dma(name, ch, src_layer, dst_layer))
            elif edge.decision == "shm":
                self.env.process(self._shm(name, ch, src_layer, dst_layer))
            elif edge.decision == "cascade":
                rec = self.link(name, "cascade", self.word_bits)
                fifo = _Fifo(self.env, rec, self.arch.cascade_fifo_depth)
                n_words = self._cascade_words(src_layer, ch)
                if ch.src is None:
                    self.env.process(self._plio_source(name, fifo, n_words))
                else:
                    self.out_fifo[(src_layer, ch.src)] = fifo
                self.env.process(self._cascade_sink(name, fifo, n_words, ch, dst_layer, rec))
            else:
                raise ValueError(f"unknown edge decision {edge.decision!r}")

    def _cascade_words(self, src_layer, ch):
        if src_layer is None:
            return -(-ch.bits // self.word_bits)
        geo = self.geos[src_layer]
        if isinstance(geo, AggGeometry):
            return -(-(geo.F * 8) // self.word_bits)
        return jloop_count(geo.kernel, self.arch) * self.words_per_jloop()

    # -- transfer processes
    def _dma(self, name, ch, src_layer, dst_layer):
        env, a, p = self.env, self.arch, self.profile
        if ch.src is not None:
            yield self.done[(src_layer, ch.src)]
        start = env.now
        dur = p.l_init + -(-ch.bits // a.dma_bw) + a.dma_hop_cycles * ch.distance
        self.log(name, "dma_start", ch.bits)
        yield env.timeout(dur)
        rec = self.link(name, "dma", a.dma_bw)
        # payload streams over the final ceil(bits/bw) cycles, after setup and hops
        stream = -(-ch.bits // a.dma_bw)
        rec.intervals.append((env.now - stream, env.now, ch.bits))
        rec.put += 1
        rec.got += 1
        if env.now - start + EPS < p.l_init + stream + a.dma_hop_cycles * ch.distance:
            raise InvariantError(f"{name}: DMA finished faster than its channel latency")
        self.log(name, "dma_done", ch.bits)
        self._deliver(name, ch, dst_layer)

    def _shm(self, name, ch, src_layer, dst_layer):
        env, a, p = self.env, self.arch, self.profile
        yield self.done[(src_layer, ch.src)]
        xfer = -(-ch.bits // a.shm_bw)
        yield env.timeout(p.shm_sync)
        yield env.timeout(xfer)
        rec = self.link(name, "shm", a.shm_bw)
        rec.intervals.append((env.now - xfer, env.now, ch.bits))
        rec.put += 1
        rec.got += 1
        self.log(name, "shm_done", ch.bits)
        self._deliver(name, ch, dst_layer)

    def _plio_source(self, name, fifo, n_words):
        for w in range(n_words):
            yield fifo.put((self.env.now, w))
            self.log(name, "word_out", self.word_bits)
            yield self.env.timeout(1)

    def _cascade_sink(self, name, fifo, n_words, ch, dst_layer, rec):
        env = self.env
        for _ in range(n_words):
            t_emit, _w = yield fifo.get()
            land = t_emit + 1
            if land > env.now:
                yield env.timeout(land - env.now)
            rec.intervals.append((env.now - 1, env.now, self.word_bits))
            self.log(name, "word_in", self.word_bits)
        # the consumer (or PLIO) sees a complete buffer after the fixed cascade gap
        yield env.timeout(self.profile.o_cas)
        self._deliver(name, ch, dst_layer)

    def _deliver(self, name, ch, dst_layer):
        if dst_layer is None:
            self.egress_end.append(self.env.now)
            self.log(name, "egress")
            return
        for d in ch.dsts:
            self.arrive(dst_layer, d, name)

    # -- compute processes
    def _start_dense(self, i):
        geo = self.geos[i]
        layer = self.model.layers[i]
        edges = self.design.comm.edges
        br = layer.has_bias or layer.has_relu
        lj = chain_jloop_cycles(geo.kernel, geo.B, self.arch, self.profile, br)
        l_o = self.profile.overhead(edges[i].decision, edges[i + 1].decision, br)
        nj = jloop_count(geo.kernel, self.arch)
        psum = {}
        for a in range(geo.A):
            for c in range(geo.C):
                for b in range(geo.B - 1):
                    name = f"L{i}.psum[{a},{c}]{b}->{b + 1}"
                    psum[(a, b, c)] = (simpy.Store(self.env, capacity=1),
                                       self.link(name, "psum", self.word_bits))
        for (a, b, c), t in self.tiles_of(i):
            self.env.process(self._dense_tile(i, (a, b, c), t, geo, lj[b], l_o, nj, psum))

    def _dense_tile(self, i, abc, tile, geo, lj, l_o, nj, psum):
        env = self.env
        a, b, c = abc
        key = (i, tile)
        yield self.ready[key]
        self._check_causal(key)
        start = env.now
        self.log(f"L{i}{tile}", "start")
        yield env.timeout(l_o)
        rightmost = b == geo.B - 1
        fifo = self.out_fifo.get(key) if rightmost else None
        wpl = self.words_per_jloop()
        pw = self.psum_words()
        for j in range(nj):
            if b > 0:
                store, rec = psum[(a, b - 1, c)]
                yield store.get()
                rec.got += 1
            dur = lj if rightmost else max(lj, pw)
            t0 = env.now
            if fifo is not None:
                yield env.timeout(dur - wpl)
                for w in range(wpl):
                    yield fifo.put((env.now, w))
                    self.log(f"L{i}{tile}", "word_out", self.word_bits)
                    yield env.timeout(1)
            else:
                yield env.timeout(dur)
            self.phases[key].append(("jloop", t0, env.now))
            if not rightmost:
                store, rec = psum[(a, b, c)]
                for w in range(pw):
                    rec.intervals.append((env.now - pw + w, env.now - pw + w + 1, self.word_bits))
                yield store.put(j)
                rec.put += 1
        self.phases[key].insert(0, ("prologue", start, start + l_o))
        self.log(f"L{i}{tile}", "done")
        self.done[key].succeed(env.now)

    def _start_agg(self, i):
        geo = self.geos[i]
        layer = self.model.layers[i]
        local = aggregation_local_cycles(geo.H1, geo.W2, self.arch, self.profile)
        hop = aggregation_hop_cycles(geo.W2, self.arch, self.profile)
        hop_bits = geo.W2 * 32
        chain = {a: simpy.Store(self.env, capacity=1) for a in range(geo.A)}
        for (a,), t in self.tiles_of(i):
            self.env.process(self._agg_tile(i, a, t, geo, layer, local, hop, hop_bits, chain))

    def _agg_tile(self, i, a, tile, geo, layer, local, hop, hop_bits, chain):
        env = self.env
        key = (i, tile)
        yield self.ready[key]
        self._check_causal(key)
        start = env.now
        yield env.timeout(local)
        self.phases[key].append(("reduce", start, env.now))
        if a < geo.A - 1:
            yield chain[a].get()
            self.links[f"L{i}.chain{a + 1}->{a}"].got += 1
        if a > 0:
            rec = self.link(f"L{i}.chain{a}->{a - 1}", "shm", self.arch.shm_bw)
            yield env.timeout(hop)
            xfer = -(-hop_bits // self.arch.shm_bw)
            rec.intervals.append((env.now - xfer, env.now, hop_bits))
            rec.put += 1
            yield chain[a - 1].put(a)
        else:
            if layer.reduce_kind == "mean":
                t0 = env.now
                yield env.timeout(self.profile.l_epi_br)
                self.phases[key].append(("divide", t0, env.now))
            fifo = self.out_fifo.get(key)
            if fifo is not None:
                for w in range(self._cascade_words(i, None)):
                    yield fifo.put((env.now, w))
                    yield env.timeout(1)
        self.log(f"L{i}{tile}", "done")
        self.done[key].succeed(env.now)

    def _check_causal(self, key):
        now = self.env.now
        for t, src in self.arrivals[key]:
            if t > now + EPS:
                raise InvariantError(f"tile {key[1]} of layer {key[0]} started before input from {src}")

    # -- run
    def run(self):
        self.build()
        self.env.run()
        blocked = sorted(f"L{i}{t}" for (i, t), ev in self.done.items() if not ev.triggered)
        if blocked or len(self.egress_end) != self.egress_expected:
            waiting = sorted(f"L{i}{t}" for (i, t), n in self.pending.items() if n > 0)
            raise DeadlockError(f"simulation stalled; unfinished tiles {blocked}, waiting on input {waiting}",
                                blocked)
        check_links(self.links)
        intervals = {}
        for (i, t), ev in self.done.items():
            s = self.ready[(i, t)].value
            e = ev.value
            lo, hi = intervals.get(i, (s, e))
            intervals[i] = (min(lo, s), max(hi, e))
        end = max(self.egress_end)
        events = sorted(self.events, key=lambda e: (e[0], e[1], e[2]))
        return SimTrace(end, intervals, self.links, events, dict(self.phases))


def check_links(links):
    """Bandwidth caps and word conservation over every recorded link."""
    for name, rec in links.items():
        if rec.put != rec.got:
            raise InvariantError(f"{name}: {rec.put} words sent but {rec.got} received")
        if rec.kind in ("cascade", "psum"):
            starts = sorted(s for s, _, _ in rec.intervals)
            for x, y in zip(starts, starts[1:]):
                if y - x < 1 - EPS:
                    raise InvariantError(f"{name}: more than {rec.cap_bits} bits in one cycle")
            for _, _, bits in rec.intervals:
                if bits > rec.cap_bits:
                    raise InvariantError(f"{name}: word of {bits} bits exceeds link width")
        else:
            for s, e, bits in rec.intervals:
                if bits > rec.cap_bits * (e - s) + EPS:
                    raise InvariantError(f"{name}: {bits} bits in {e - s} cycles exceeds {rec.cap_bits}/cycle")


def run_timed(design, model, arch, profile):
    return _TimedSim(design, model, arch, profile).run()
