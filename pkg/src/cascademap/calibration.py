"""Fitting overhead constants from measured latencies.

Single-kernel measurements give ``L_epi``/``L_epi_br`` and the per-variant
``L_o`` by least squares over the j-loop model. Link constants (``L_cas``,
``L_init``, ``O_cas``) come from an observed two-layer design pair and the
aggregation constants from observed aggregation latencies.

Measurement CSV columns: ``H1,W1,W2,variant,br,latency_ns`` where ``variant``
is ``<in>-<out>`` (e.g. ``dma-dma``) and ``br`` is 0/1.
Aggregation CSV columns: ``M,F,tiles,method,latency_ns`` with ``method`` in
``mac``/``baseline``.
"""
from __future__ import annotations

import csv
import itertools
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .arch import CalibrationProfile, ConfigError, bundled_text, ns_to_cycles, variant_key
from .design import KernelShape
from .perf_model import aggregation_ops, jloop_count


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Measurement:
    kernel: KernelShape
    variant: str
    br: bool
    latency_ns: float


@dataclass
class MeasurementSet:
    items: list

    def __len__(self):
        return len(self.items)

    def select(self, br=None, shapes=None):
        out = []
        for m in self.items:
            if br is not None and m.br != br:
                continue
            if shapes is not None and (m.kernel.H1, m.kernel.W1, m.kernel.W2) not in shapes:
                continue
            out.append(m)
        return MeasurementSet(out)


def parse_measurements(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    need = {"H1", "W1", "W2", "variant", "br", "latency_ns"}
    if not rows or not need <= set(rows[0]):
        raise ConfigError(f"measurement file needs columns {sorted(need)}")
    items = []
    for n, r in enumerate(rows, start=2):
        try:
            k = KernelShape(int(r["H1"]), int(r["W1"]), int(r["W2"]))
            items.append(Measurement(k, r["variant"].strip(), r["br"].strip() in ("1", "true", "yes"),
                                     float(r["latency_ns"])))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {n}: {exc}") from None
    return MeasurementSet(items)


def load_measurements(path):
    with open(path) as fh:
        return parse_measurements(fh.read())


def kernel_measurements():
    return parse_measurements(bundled_text("kernel_latency.csv"))


# ------------------------------------------------------------------ single-kernel fit

@dataclass
class PointError:
    kernel: KernelShape
    variant: str
    br: bool
    observed: float  # cycles
    predicted: float

    @property
    def rel_error(self):
        return (self.predicted - self.observed) / self.observed


@dataclass
class FitReport:
    points: list
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def mape(self):
        if not self.points:
            return 0.0
        return float(np.mean([abs(p.rel_error) for p in self.points]))

    def table(self, freq_ghz=1.25):
        lines = [f"{'kernel':<14}{'variant':<13}{'obs ns':>9}{'pred ns':>9}{'err %':>8}"]
        for p in self.points:
            k = p.kernel
            var = p.variant + ("+br" if p.br else "")
            lines.append(f"{f'{k.H1}x{k.W1}x{k.W2}':<14}{var:<13}{p.observed / freq_ghz:>9.1f}"
                         f"{p.predicted / freq_ghz:>9.1f}{100 * p.rel_error:>8.2f}")
        lines.append(f"MAPE {100 * self.mape:.2f}%")
        for k in sorted(self.params):
            lines.append(f"{k} = {self.params[k]:.4f}")
        lines.extend(self.notes)
        return "\n".join(lines)


def _mac_cycles(k, arch):
    return 4 * k.W1 / arch.block_k


def _nnls(x, y, tol=1e-9):
    """Least squares with every coefficient >= 0, by trying each set of zeroed columns.

    The systems here have at most a handful of unknowns, so the exhaustive
    active-set search is exact and cheap. Returns (solution, clamped columns).
    """
    n = x.shape[1]
    free = np.linalg.lstsq(x, y, rcond=None)[0]
    if (free >= -tol).all():
        return np.maximum(free, 0.0), []
    best = None
    for k in range(1, n + 1):
        for zeroed in itertools.combinations(range(n), k):
            keep = [j for j in range(n) if j not in zeroed]
            sol = np.zeros(n)
            if keep:
                sol[keep] = np.linalg.lstsq(x[:, keep], y, rcond=None)[0]
            if (sol < -tol).any():
                continue
            sse = float(np.sum((x @ sol - y) ** 2))
            if best is None or sse < best[0] - tol:
                best = (sse, np.maximum(sol, 0.0), [j for j in zeroed if free[j] < -tol])
    return best[1], best[2]


def _fit_group(ms, arch, label):
    """Shared epilogue constant plus one L_o per variant, by least squares."""
    variants = sorted({m.variant for m in ms})
    for v in variants:
        nj = {jloop_count(m.kernel, arch) for m in ms if m.variant == v}
        if len(nj) < 2:
            raise ConfigError(f"{label} group {v!r}: needs >= 2 distinct j-loop counts, got {sorted(nj)}")
    x = np.array([[jloop_count(m.kernel, arch)] + [1.0 if m.variant == v else 0.0 for v in variants]
                  for m in ms], dtype=float)
    cyc = np.array([ns_to_cycles(m.latency_ns, arch) for m in ms])
    y = cyc - np.array([jloop_count(m.kernel, arch) * _mac_cycles(m.kernel, arch) for m in ms])
    if np.ptp(cyc) == 0 and len({m.kernel for m in ms}) == 1:
        raise ConfigError(f"{label} group: measurements are degenerate (all identical)")
    sol, clamped = _nnls(x, y)
    epi, l_o = float(sol[0]), {v: float(c) for v, c in zip(variants, sol[1:])}
    notes = []
    names = ["epilogue"] + [f"L_o[{v}]" for v in variants]
    for j in clamped:
        warnings.warn(f"{label}: unconstrained {names[j]} would be negative; held at 0", CalibrationWarning)
        notes.append(f"{label}: {names[j]} held at 0 (unconstrained optimum negative)")
    return epi, l_o, notes


def fit_overheads(ms, arch, base=None):
    """Fit L_epi (no bias/ReLU), L_epi_br and L_o per variant; returns (profile, report)."""
    if len(ms) < 2:
        raise ConfigError("need at least two measurements")
    base = base or CalibrationProfile(l_o={})
    changes, l_o, notes, params = {}, dict(base.l_o), [], {}
    for br in (False, True):
        group = [m for m in ms.items if m.br == br]
        if not group:
            continue
        label = "bias/relu" if br else "plain"
        epi, lo, n = _fit_group(group, arch, label)
        notes.extend(n)
        changes["l_epi_br" if br else "l_epi"] = epi
        params["l_epi_br" if br else "l_epi"] = epi
        for v, c in lo.items():
            inp, out = v.split("-", 1)
            key = variant_key(inp, out, br)
            l_o[key] = c
            params[f"l_o[{key}]"] = c
    profile = base.with_(l_o=l_o, **changes)
    report = evaluate_profile(profile, ms, arch)
    report.params, report.notes = params, notes
    return profile, report


def predict_cycles(profile, m, arch):
    epi = profile.l_epi_br if m.br else profile.l_epi
    inp, out = m.variant.split("-", 1)
    return jloop_count(m.kernel, arch) * (_mac_cycles(m.kernel, arch) + epi) + profile.overhead(inp, out, m.br)


def evaluate_profile(profile, ms, arch):
    pts = [PointError(m.kernel, m.variant, m.br, ns_to_cycles(m.latency_ns, arch),
                      predict_cycles(profile, m, arch)) for m in ms.items]
    return FitReport(pts)


# ------------------------------------------------------------------ link constants

TWO_LAYER_SHAPES = ((8, 64, 64), (8, 64, 32))
# observed cycles: first layer compute in the cascade design, and the
# inter-layer communication of the DMA design and of the cascade design
TWO_LAYER_OBSERVED = {"cascade_l0_compute": 145, "dma_edge": 74, "cascade_edge": 7}
TWO_LAYER_DMA_MAPPING = ((1, 4, 2), (1, 4, 1))
TWO_LAYER_CASCADE_MAPPING = ((1, 4, 1), (1, 4, 1))


def _floor1(x):
    # largest 0.1 step not above x, so ceil-ed predictions do not overshoot
    return math.floor(round(x * 10, 6)) / 10


def two_layer_model():
    from .model_ir import build_model

    (m, k, _), _ = TWO_LAYER_SHAPES
    spec = [{"N": n, "bias": False, "relu": False} for _, _, n in TWO_LAYER_SHAPES]
    return build_model("two-layer", (m, k), spec)


def fit_link_constants(profile, arch, observed=None):
    """L_cas, L_init and O_cas from the observed two-layer design pair."""
    from .dse import make_design

    obs = dict(TWO_LAYER_OBSERVED, **(observed or {}))
    model = two_layer_model()
    casc = make_design(model, TWO_LAYER_CASCADE_MAPPING, arch)
    e = casc.comm.edges[1]
    if e.decision != "cascade":
        raise ConfigError("two-layer cascade fixture did not place as a cascade design")
    geo_k = _layer_kernel(model, 0, TWO_LAYER_CASCADE_MAPPING[0], arch)
    B = TWO_LAYER_CASCADE_MAPPING[0][1]
    loops = jloop_count(geo_k, arch) + B - 1
    l_o = profile.overhead("dma", "cascade", False)
    l_cas = (obs["cascade_l0_compute"] - l_o) / loops - _mac_cycles(geo_k, arch) - profile.l_epi
    dma = make_design(model, TWO_LAYER_DMA_MAPPING, arch)
    de = dma.comm.edges[1]
    if de.decision != "dma":
        raise ConfigError("two-layer DMA fixture unexpectedly uses a cascade edge")
    size = de.total_bits if profile.dma_size_mode == "total" else de.max_bits
    l_init = obs["dma_edge"] - math.ceil(size / arch.dma_bw) - arch.dma_hop_cycles * de.max_distance
    o_cas = obs["cascade_edge"]
    vals = {"l_cas": _floor1(l_cas), "l_init": _floor1(l_init), "o_cas": _floor1(o_cas)}
    for name, v in vals.items():
        if v < 0:
            raise ConfigError(f"fitted {name} = {v} is negative; observations are inconsistent")
    detail = {"dma_edge_bits": size, "dma_edge_distance": de.max_distance, "loops": loops}
    return vals, detail


def _layer_kernel(model, i, abc, arch):
    from .design import layer_geometry

    return layer_geometry(model.layers[i], abc, arch).kernel


# ------------------------------------------------------------------ aggregation constants

@dataclass(frozen=True)
class AggMeasurement:
    M: int
    F: int
    tiles: int
    method: str
    latency_ns: float


def parse_agg_measurements(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    need = {"M", "F", "tiles", "method", "latency_ns"}
    if not rows or not need <= set(rows[0]):
        raise ConfigError(f"aggregation file needs columns {sorted(need)}")
    return [AggMeasurement(int(r["M"]), int(r["F"]), int(r["tiles"]), r["method"].strip(),
                           float(r["latency_ns"])) for r in rows]


def aggregation_measurements():
    return parse_agg_measurements(bundled_text("aggregation_latency.csv"))


def agg_tile_block(m, arch):
    """Per-tile (H1, W2) for an M x F aggregation over ``tiles`` tiles."""
    from .design import cdiv, round_up

    return round_up(cdiv(m.M, m.tiles), 2 * arch.block_m), round_up(m.F, 2 * arch.block_n)


def fit_aggregation_constants(ms, arch):
    """Least squares for (agg_o, shm_sync, row_op) over MAC and baseline sum reductions.

    Model: agg_o + ops * (1 or row_op) + (tiles - 1) * (shm_sync + ceil(32*W2/shm_bw)).
    """
    rows, y = [], []
    for m in ms:
        h1, w2 = agg_tile_block(m, arch)
        ops = aggregation_ops(h1, w2, arch, m.method)
        wire = (m.tiles - 1) * math.ceil(w2 * 32 / arch.shm_bw)
        if m.method == "mac":
            rows.append([1.0, m.tiles - 1, 0.0])
            y.append(ns_to_cycles(m.latency_ns, arch) - ops - wire)
        else:
            rows.append([1.0, m.tiles - 1, ops])
            y.append(ns_to_cycles(m.latency_ns, arch) - wire)
    x = np.array(rows)
    if np.linalg.matrix_rank(x) < 3:
        raise ConfigError("aggregation measurements cannot separate agg_o, shm_sync and row_op")
    sol, clamped = _nnls(x, np.array(y))
    names = ("agg_o", "shm_sync", "row_op")
    for k in clamped:
        warnings.warn(f"unconstrained {names[k]} would be negative; held at 0", CalibrationWarning)
    vals = {name: float(v) for name, v in zip(names, sol)}
    return {k: round(v, 1) for k, v in vals.items()}


def predict_aggregation(m, profile, arch):
    h1, w2 = agg_tile_block(m, arch)
    from .perf_model import aggregation_latency

    return aggregation_latency(h1, w2, m.tiles, "sum", arch, profile, m.method)


# ------------------------------------------------------------------ default profile

def default_profile(arch):
    """The bundled profile: every constant fitted from the bundled observations."""
    from .arch import round_profile

    t2 = kernel_measurements()
    prof, _ = fit_overheads(t2, arch)
    # variants other than dma-in/dma-out were not measured separately
    l_o = dict(prof.l_o)
    l_o["*"] = l_o["dma-dma"]
    l_o["*+br"] = l_o["dma-dma+br"]
    prof = round_profile(prof.with_(l_o=l_o))
    links, _ = fit_link_constants(prof, arch)
    agg = fit_aggregation_constants(aggregation_measurements(), arch)
    prov = {
        "l_epi": "least squares over the six single-kernel rows without bias/relu (kernel_latency.csv)",
        "l_epi_br": "least squares over the six single-kernel rows with bias/relu (kernel_latency.csv)",
        "l_o": "per-variant intercepts of the same fits; other variants fall back to dma-dma",
        "l_cas": "solved from the 145-cycle first-layer compute of the two-layer cascade design",
        "l_init": "solved from the 74-cycle inter-layer DMA of the two-layer DMA design",
        "o_cas": "the 7-cycle inter-layer cascade gap of the two-layer cascade design",
        "agg_o": "least squares over aggregation_latency.csv (sum reduction, MAC and baseline)",
        "shm_sync": "least squares over aggregation_latency.csv",
        "row_op": "least squares over aggregation_latency.csv (baseline per-row extract/add/insert)",
        "dma_size_mode": "largest channel payload bounds a multi-channel transfer",
    }
    return prof.with_(**links, **agg, provenance=prov)


def check_fixture(profile, arch):
    """Predicted cycles for the two-layer fixture quantities, for reporting."""
    from .dse import make_design

    model = two_layer_model()
    casc = make_design(model, TWO_LAYER_CASCADE_MAPPING, arch, profile)
    dma = make_design(model, TWO_LAYER_DMA_MAPPING, arch, profile)
    return {
        "cascade_l0_compute": casc.estimate.term("L0").cycles,
        "dma_edge": dma.estimate.term("L0->L1").cycles,
        "cascade_edge": casc.estimate.term("L0->L1").cycles,
        "dma_total_no_boundary": _inner(dma.estimate),
        "cascade_total_no_boundary": _inner(casc.estimate),
    }


def _inner(est):
    return sum(t.cycles for t in est.terms if not ("ingress" in t.name or "egress" in t.name))

