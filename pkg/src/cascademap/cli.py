"""Command-line interface: search, estimate, simulate, calibrate.

Exit codes: 0 success, 1 I/O or parse error, 2 infeasible, 3 functional mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import arch as arch_mod
from . import calibration, dse, model_ir
from .design import DesignError, save_design

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 1, 2, 3
_IDS = "0123456789abcdefghijklmnopqrstuvwxyz"


class CliError(Exception):
    pass


# ------------------------------------------------------------------ loading

def _read(path, what):
    if not os.path.exists(path):
        raise CliError(f"{what} file not found: {path}")
    with open(path) as fh:
        return fh.read()


def load_model_arg(value):
    if os.path.exists(value):
        return model_ir.parse_model(_read(value, "model"))
    if value in model_ir.BUNDLED_MODELS:
        return model_ir.bundled_model(value)
    raise CliError(f"model file not found: {value} (bundled: {', '.join(model_ir.BUNDLED_MODELS)})")


def load_arch_arg(args):
    a = arch_mod.parse_arch(_read(args.arch, "arch")) if args.arch else arch_mod.vek280_arch()
    if getattr(args, "budget", None) is not None:
        a = a.with_(aie_budget=args.budget)
    return a


def load_profile_arg(args):
    if args.profile == "zero":
        return arch_mod.zero_profile()
    if args.profile:
        return arch_mod.parse_profile(_read(args.profile, "profile"))
    return arch_mod.vek280_profile()


def parse_mapping(text):
    """'2x2x1,4x1x1' -> ((2, 2, 1), (4, 1, 1))"""
    out = []
    for part in text.split(","):
        bits = part.strip().lower().split("x")
        if len(bits) != 3 or not all(b.isdigit() for b in bits):
            raise CliError(f"mapping entries look like AxBxC, got {part!r}")
        out.append(tuple(int(b) for b in bits))
    return tuple(out)


def _design_from_args(args, model, arch, profile):
    if getattr(args, "design", None):
        d = dse.design_from_dict(_design_dict(args.design), model, arch, profile)
        return d
    if getattr(args, "mapping", None):
        wd = (True,) * len(model.layers) if args.weight_dma else ()
        return dse.make_design(model, parse_mapping(args.mapping), arch, profile,
                               ingress=args.ingress, egress=args.egress, weight_dma=wd)
    return dse.search(model, arch, profile).best


def _design_dict(path):
    from .design import read_design_dict

    return read_design_dict(_read(path, "design"))


# ------------------------------------------------------------------ reports

def floorplan(design):
    occ = design.placement.occupancy()
    rows = []
    for r in range(occ.shape[0] - 1, -1, -1):
        cells = "".join("." if v < 0 else _IDS[v % len(_IDS)] for v in occ[r])
        rows.append(f"{r:>3} {cells}")
    return "\n".join(rows)


def design_report(design, model, arch):
    est = design.estimate
    d = design.to_dict()
    d["n_aies"] = design.n_aies
    if est is not None:
        d["latency"] = est.to_dict()
    return d


def design_text(design, model, arch, rank=None):
    lines = []
    head = f"design for {model.name}" + (f" (rank {rank})" if rank is not None else "")
    lines.append(head)
    lines.append(f"{'layer':<7}{'shape':<14}{'A,B,C':<10}{'origin':<10}{'tiles':>6}")
    for i, (layer, abc, rect) in enumerate(zip(model.layers, design.mapping, design.placement.rects)):
        shape = f"{layer.M}x{layer.K}x{layer.N}" if layer.kind == "dense" else f"agg {layer.M}x{layer.F}"
        lines.append(f"L{i:<6}{shape:<14}{','.join(map(str, abc)):<10}"
                     f"{f'({rect.row},{rect.col})':<10}{abc[0] * abc[1] * abc[2]:>6}")
    lines.append(f"total AIEs: {design.n_aies}")
    lines.append("floorplan (row 0 at the bottom):")
    lines.append(floorplan(design))
    lines.append("edges:")
    for e in design.comm.edges:
        lines.append(f"  {e.name:<16}{e.decision:<9}{'+'.join(e.traffic):<28}channels={len(e.channels)}")
    if design.estimate is not None:
        lines.append("latency:")
        lines.append(design.estimate.table())
    return "\n".join(lines)


def _emit(args, payload, text):
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text + "\n")


# ------------------------------------------------------------------ commands

def cmd_search(args):
    model = load_model_arg(args.model)
    arch = load_arch_arg(args)
    profile = load_profile_arg(args)
    res = dse.search(model, arch, profile, topk=args.topk, allow_cascade=not args.no_cascade)
    if args.save_design:
        save_design(res.best, args.save_design)
    payload = {
        "model": model.name,
        "designs": [design_report(d, model, arch) for d in res.ranked],
        "search": res.stats,
    }
    text = "\n\n".join(design_text(d, model, arch, rank=k + 1 if args.topk > 1 else None)
                       for k, d in enumerate(res.ranked))
    text += f"\n\nsearch: {res.stats['nodes']} nodes, {res.stats['leaves']} complete designs scored"
    _emit(args, payload, text)
    return EXIT_OK


def cmd_estimate(args):
    model = load_model_arg(args.model)
    arch = load_arch_arg(args)
    profile = load_profile_arg(args)
    design = _design_from_args(args, model, arch, profile)
    _emit(args, design_report(design, model, arch), design_text(design, model, arch))
    return EXIT_OK


def cmd_simulate(args):
    from .sim import first_mismatch, random_input, random_params, reference_forward, run_functional, run_timed

    model = load_model_arg(args.model)
    arch = load_arch_arg(args)
    profile = load_profile_arg(args)
    design = _design_from_args(args, model, arch, profile)
    params = random_params(model, args.seed)
    x = random_input(model, args.seed)
    func = run_functional(design, model, x, params, arch)
    ref = reference_forward(model, x, params)
    mism = first_mismatch(func.layers, ref)
    if mism is None and not (func.output == ref[-1]).all():
        mism = first_mismatch([func.output], [ref[-1]])
    trace = run_timed(design, model, arch, profile)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv())
    analytical = design.estimate.total_cycles
    dev = (analytical - trace.end_time) / trace.end_time
    comm = {t.name: t.cycles for t in design.estimate.terms if t.kind == "comm"}
    payload = {
        "model": model.name,
        "seed": args.seed,
        "design": design.to_dict(),
        "functional": {"pass": mism is None, "mismatch": None if mism is None else vars(mism)},
        "analytical_cycles": analytical,
        "simulated_cycles": trace.end_cycles,
        "deviation_pct": round(100 * dev, 3),
        "comm_cycles": comm,
        "trace": trace.summary(),
    }
    lines = [design_text(design, model, arch), ""]
    lines.append("functional: PASS (exact)" if mism is None else f"functional: FAIL at {mism}")
    lines.append(f"analytical: {analytical} cycles ({analytical / arch.freq_ghz:.1f} ns)")
    lines.append(f"simulated:  {trace.end_cycles} cycles ({trace.end_cycles / arch.freq_ghz:.1f} ns)")
    lines.append(f"deviation:  {100 * dev:.3f}%")
    lines.append("comm components: " + ", ".join(f"{k}={v}" for k, v in comm.items()))
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if mism is None else EXIT_MISMATCH


def cmd_calibrate(args):
    arch = load_arch_arg(args)
    if args.measurements:
        ms = calibration.parse_measurements(_read(args.measurements, "measurement"))
    else:
        ms = calibration.kernel_measurements()
    if args.no_br:
        ms = ms.select(br=False)
    base = load_profile_arg(args) if args.profile else arch_mod.vek280_profile()
    profile, report = calibration.fit_overheads(ms, arch, base=base)
    profile = arch_mod.round_profile(profile)
    final = calibration.evaluate_profile(profile, ms, arch)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(arch_mod.format_profile(profile))
    payload = {
        "params": {k: round(v, 4) for k, v in sorted(report.params.items())},
        "mape_pct": round(100 * final.mape, 3),
        "points": [
            {"kernel": f"{p.kernel.H1}x{p.kernel.W1}x{p.kernel.W2}", "variant": p.variant, "br": p.br,
             "observed_cycles": round(p.observed, 3), "predicted_cycles": round(p.predicted, 3),
             "error_pct": round(100 * p.rel_error, 3)}
            for p in final.points
        ],
        "notes": report.notes,
    }
    text = final.table(arch.freq_ghz) + "\n" + "\n".join(
        f"{k} = {v:.4f}" for k, v in sorted(report.params.items()))
    if args.output:
        text += f"\nprofile written to {args.output}"
    _emit(args, payload, text)
    return EXIT_OK


# ------------------------------------------------------------------ entry

def build_parser():
    p = argparse.ArgumentParser(prog="cascademap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_model=True):
        if needs_model:
            sp.add_argument("--model", required=True, help="model file or bundled model name")
        sp.add_argument("--arch", help="arch file (default: bundled vek280)")
        sp.add_argument("--profile", help="profile file, or 'zero' (default: bundled vek280)")
        sp.add_argument("--budget", type=int, help="AIE budget below the array size")
        sp.add_argument("--format", choices=("text", "json"), default="text")

    def design_opts(sp):
        sp.add_argument("--design", help="design file written by 'search --save-design'")
        sp.add_argument("--mapping", help="explicit mapping, e.g. 2x2x1,4x1x1")
        sp.add_argument("--ingress", choices=("dma", "cascade"), default="dma")
        sp.add_argument("--egress", choices=("dma", "cascade"), default="dma")
        sp.add_argument("--weight-dma", action="store_true", help="stream weights by DMA with the input")

    sp = sub.add_parser("search", help="find the minimum-latency design")
    common(sp)
    sp.add_argument("--topk", type=int, default=1)
    sp.add_argument("--no-cascade", action="store_true", help="forbid inter-layer cascade edges")
    sp.add_argument("--save-design", help="write the best design to this file")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("estimate", help="score a mapping or design file")
    common(sp)
    design_opts(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="functional check and timed simulation")
    common(sp)
    design_opts(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace", help="write the event log as CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="fit overhead constants to measured latencies")
    common(sp, needs_model=False)
    sp.add_argument("--measurements", help="CSV with H1,W1,W2,variant,br,latency_ns (default: bundled)")
    sp.add_argument("--no-br", action="store_true", help="fit only rows without bias/relu")
    sp.add_argument("--output", help="write the fitted profile here")
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except dse.InfeasibleError as exc:
        print(f"infeasible ({exc.constraint}): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CliError, OSError, model_ir.ModelError, arch_mod.ConfigError, DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
