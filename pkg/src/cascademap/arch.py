"""Target array description and calibrated overhead constants.

Both files are INI documents (read with :mod:`configparser`).

Architecture file, section ``[arch]``::

    rows = 8
    cols = 38
    plio = 32
    block = 4x8x8
    dma_bw = 32              # bits/cycle
    shm_bw = 256
    cascade_bw = 512
    cascade_fifo_depth = 4
    dma_hop_cycles = 4
    freq_ghz = 1.25
    aie_budget = 304         # optional, defaults to rows*cols

Profile file, section ``[profile]`` holds the scalar overheads in cycles
(``l_epi``, ``l_epi_br``, ``l_cas``, ``l_init``, ``o_cas``, ``agg_o``,
``shm_sync``, ``row_op``, ``dma_size_mode``), section ``[l_o]`` maps
communication variants ``<input>-<output>[+br]`` to cycles, and the optional
``[provenance]`` section carries one free-text note per constant.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from importlib import resources

LINK_KINDS = ("dma", "cascade", "shm")
DMA_SIZE_MODES = ("per_channel", "total")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArchSpec:
    rows: int
    cols: int
    plio: int
    block_m: int
    block_k: int
    block_n: int
    macs_per_cycle: int
    dma_bw: int
    shm_bw: int
    cascade_bw: int
    cascade_fifo_depth: int
    dma_hop_cycles: int
    freq_ghz: float
    aie_budget: int | None = None

    def __post_init__(self):
        if min(self.rows, self.cols, self.plio) < 1:
            raise ConfigError("rows, cols and plio must be >= 1")
        if min(self.dma_bw, self.shm_bw, self.cascade_bw) <= 0:
            raise ConfigError("bandwidths must be > 0")
        if self.cascade_fifo_depth < 1:
            raise ConfigError("cascade_fifo_depth must be >= 1")
        if self.macs_per_cycle != self.block_m * self.block_k * self.block_n:
            raise ConfigError(
                f"macs_per_cycle {self.macs_per_cycle} != B_M*B_K*B_N "
                f"{self.block_m * self.block_k * self.block_n}"
            )
        if self.freq_ghz <= 0:
            raise ConfigError("freq_ghz must be > 0")
        if self.aie_budget is not None and self.aie_budget < 1:
            raise ConfigError("aie_budget must be >= 1")

    @property
    def n_tiles(self):
        return self.rows * self.cols

    @property
    def max_aies(self):
        if self.aie_budget is None:
            return self.n_tiles
        return min(self.aie_budget, self.n_tiles)

    @property
    def block(self):
        return (self.block_m, self.block_k, self.block_n)

    def with_(self, **changes):
        return replace(self, **changes)


def default_aie_ml():
    """VEK280-like AIE-ML array: 8 x 38 tiles, INT8 block 4x8x8, 1.25 GHz."""
    return ArchSpec(
        rows=8, cols=38, plio=32,
        block_m=4, block_k=8, block_n=8, macs_per_cycle=256,
        dma_bw=32, shm_bw=256, cascade_bw=512, cascade_fifo_depth=4,
        dma_hop_cycles=4, freq_ghz=1.25,
    )


def cycles_to_ns(cycles, arch):
    if cycles < 0:
        raise ValueError("cycle count must be >= 0")
    return cycles / arch.freq_ghz


def ns_to_cycles(ns, arch):
    return ns * arch.freq_ghz


def variant_key(inp, out, br=False):
    return f"{inp}-{out}" + ("+br" if br else "")


@dataclass(frozen=True)
class CalibrationProfile:
    l_epi: float = 0.0
    l_epi_br: float = 0.0
    l_o: dict = field(default_factory=dict)
    l_cas: float = 0.0
    l_init: float = 0.0
    o_cas: float = 0.0
    # global aggregation: kernel overhead, shared-buffer lock handoff, per-row op of the baseline
    agg_o: float = 0.0
    shm_sync: float = 0.0
    row_op: float = 0.0
    dma_size_mode: str = "per_channel"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        scalars = ("l_epi", "l_epi_br", "l_cas", "l_init", "o_cas", "agg_o", "shm_sync", "row_op")
        for name in scalars:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for key, value in self.l_o.items():
            if value < 0:
                raise ConfigError(f"l_o[{key}] must be >= 0")
        if self.dma_size_mode not in DMA_SIZE_MODES:
            raise ConfigError(f"dma_size_mode must be one of {DMA_SIZE_MODES}")

    def overhead(self, inp, out, br=False):
        """L_o for a kernel variant; missing variants fall back to the ``*`` default."""
        key = variant_key(inp, out, br)
        if key in self.l_o:
            return self.l_o[key]
        fallback = "*+br" if br else "*"
        if fallback in self.l_o:
            return self.l_o[fallback]
        if br and "*" in self.l_o:
            return self.l_o["*"]
        raise KeyError(f"profile has no L_o entry for variant {key!r}")

    def with_(self, **changes):
        return replace(self, **changes)


def zero_profile():
    """All overheads zero: the ideal bandwidth/compute-bound model."""
    return CalibrationProfile(l_o={"*": 0.0, "*+br": 0.0})


# ---------------------------------------------------------------- file formats

_BLOCK_RE = re.compile(r"^(\d+)\s*[xX]\s*(\d+)\s*[xX]\s*(\d+)$")


def _parser():
    return configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)


def parse_arch(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"arch file: {exc}") from None
    if "arch" not in cp:
        raise ConfigError("arch file has no [arch] section")
    sec = cp["arch"]
    try:
        m = _BLOCK_RE.match(sec.get("block", "4x8x8"))
        if not m:
            raise ConfigError(f"block must look like 4x8x8, got {sec.get('block')!r}")
        bm, bk, bn = (int(g) for g in m.groups())
        budget = sec.get("aie_budget")
        return ArchSpec(
            rows=sec.getint("rows"), cols=sec.getint("cols"), plio=sec.getint("plio"),
            block_m=bm, block_k=bk, block_n=bn,
            macs_per_cycle=sec.getint("macs_per_cycle", bm * bk * bn),
            dma_bw=sec.getint("dma_bw", 32), shm_bw=sec.getint("shm_bw", 256),
            cascade_bw=sec.getint("cascade_bw", 512),
            cascade_fifo_depth=sec.getint("cascade_fifo_depth", 4),
            dma_hop_cycles=sec.getint("dma_hop_cycles", 4),
            freq_ghz=sec.getfloat("freq_ghz", 1.25),
            aie_budget=int(budget) if budget not in (None, "", "none") else None,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"arch file: {exc}") from None


def format_arch(arch):
    lines = [
        "[arch]",
        f"rows = {arch.rows}",
        f"cols = {arch.cols}",
        f"plio = {arch.plio}",
        f"block = {arch.block_m}x{arch.block_k}x{arch.block_n}",
        f"macs_per_cycle = {arch.macs_per_cycle}",
        f"dma_bw = {arch.dma_bw}",
        f"shm_bw = {arch.shm_bw}",
        f"cascade_bw = {arch.cascade_bw}",
        f"cascade_fifo_depth = {arch.cascade_fifo_depth}",
        f"dma_hop_cycles = {arch.dma_hop_cycles}",
        f"freq_ghz = {arch.freq_ghz}",
    ]
    if arch.aie_budget is not None:
        lines.append(f"aie_budget = {arch.aie_budget}")
    return "\n".join(lines) + "\n"


_SCALARS = ("l_epi", "l_epi_br", "l_cas", "l_init", "o_cas", "agg_o", "shm_sync", "row_op")


def parse_profile(text):
    cp = _parser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"profile file: {exc}") from None
    if "profile" not in cp:
        raise ConfigError("profile file has no [profile] section")
    sec = cp["profile"]
    kwargs = {}
    try:
        for name in _SCALARS:
            kwargs[name] = sec.getfloat(name, 0.0)
        kwargs["dma_size_mode"] = sec.get("dma_size_mode", "per_channel")
        l_o = {k: float(v) for k, v in cp["l_o"].items()} if "l_o" in cp else {}
    except ValueError as exc:
        raise ConfigError(f"profile file: {exc}") from None
    if not l_o:
        raise ConfigError("profile file has no [l_o] entries")
    prov = dict(cp["provenance"].items()) if "provenance" in cp else {}
    return CalibrationProfile(l_o=l_o, provenance=prov, **kwargs)


def _num(x):
    return f"{x:.1f}" if abs(x - round(x, 1)) < 1e-9 else repr(float(x))


def format_profile(profile):
    out = ["[profile]"]
    for name in _SCALARS:
        out.append(f"{name} = {_num(getattr(profile, name))}")
    out.append(f"dma_size_mode = {profile.dma_size_mode}")
    out.append("")
    out.append("[l_o]")
    for key in sorted(profile.l_o):
        out.append(f"{key} = {_num(profile.l_o[key])}")
    if profile.provenance:
        out.append("")
        out.append("[provenance]")
        for key in sorted(profile.provenance):
            note = " ".join(str(profile.provenance[key]).split())
            out.append(f"{key} = {note}")
    return "\n".join(out) + "\n"


def round_profile(profile, ndigits=1):
    """Round every constant to ``ndigits`` decimals (0.1-cycle resolution by default)."""
    scal = {name: round(getattr(profile, name), ndigits) for name in _SCALARS}
    l_o = {k: round(v, ndigits) for k, v in profile.l_o.items()}
    return replace(profile, l_o=l_o, **scal)


def load_arch(path):
    with open(path) as fh:
        return parse_arch(fh.read())


def load_profile(path):
    with open(path) as fh:
        return parse_profile(fh.read())


def bundled_text(name):
    return resources.files("cascademap").joinpath("data", name).read_text()


def vek280_arch():
    return parse_arch(bundled_text("vek280.arch"))


def vek280_profile():
    return parse_profile(bundled_text("vek280.profile"))

