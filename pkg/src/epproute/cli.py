"""Command line entry point.

Exit codes: 0 success, 2 certification failure (schedule not error-pattern
preserving), 3 fit failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .circuit import SurfaceCodeSpec
from .embedder import UncertifiedSchedule, depth_report, emit_physical_circuit
from .experiment import (
    ABSTRACT_LATTICE,
    ExperimentConfig,
    FitError,
    Point,
    build_circuit,
    curves,
    fit_peff,
    fit_slope,
    matched_window,
    plot_spec,
    read_csv,
    run_experiment,
    simulate_point,
    slopes_agree,
    write_csv,
)
from .router import SwapSchedule, validate_schedule
from .surface_router import MoveTable, SearchFailure, golden_round, search_unit_cell_schedule, tile_schedule
from .topology import DeviceGraph, LatticeKind

EXIT_CERT = 2
EXIT_FIT = 3

LATTICES = [k.value for k in LatticeKind if k is not LatticeKind.ROTATED_SQUARE]


def _tiled(args):
    if args.table:
        table = MoveTable.from_csv(Path(args.table).read_text())
        return tile_schedule(table, SurfaceCodeSpec(args.distance), kind=args.lattice)
    return golden_round(args.lattice, args.distance)


def cmd_route(args) -> int:
    t0 = time.perf_counter()
    try:
        res = search_unit_cell_schedule(args.lattice, max_swap_layers=args.max_swap_layers)
    except SearchFailure as exc:
        print(f"route: {exc}", file=sys.stderr)
        return EXIT_CERT
    text = res.table.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# {res.depth} swap layers, {res.placements_tried} placements, "
          f"{time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 0


def cmd_tile(args) -> int:
    tr = _tiled(args)
    Path(args.output).write_text(tr.schedule.to_json())
    if args.device_out:
        Path(args.device_out).write_text(tr.device.to_json())
    print(json.dumps({"qubits": len(tr.device.nodes), "routing_qubits": tr.n_routing_qubits,
                      "swaps": tr.schedule.n_swaps, "dropped_moves": len(tr.dropped_moves),
                      "boundary_type1": len(tr.boundary_moves)}))
    return 0


def cmd_validate(args) -> int:
    sched = SwapSchedule.from_json(Path(args.schedule).read_text())
    device = DeviceGraph.from_json(Path(args.device).read_text())
    problems = validate_schedule(sched, device)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CERT
    print("certified")
    return 0


def cmd_embed(args) -> int:
    tr = _tiled(args)
    spec = SurfaceCodeSpec(args.distance, rounds=args.rounds)
    try:
        c = emit_physical_circuit(tr.schedule, spec, tr.device, decompose_swaps=not args.native_swaps,
                                  cancel_cnots=args.cancel)
    except UncertifiedSchedule as exc:
        print(f"embed: {exc}", file=sys.stderr)
        return EXIT_CERT
    if args.output:
        Path(args.output).write_text(c.to_text())
    rep = depth_report(c)
    rep.pop("per_layer")
    print(json.dumps(rep))
    return 0


def cmd_simulate(args) -> int:
    variant = "abstract" if args.lattice == ABSTRACT_LATTICE else "embedded"
    cfg = ExperimentConfig(lattices=[] if variant == "abstract" else [args.lattice],
                           distances=[args.distance], shots=args.shots, seed=args.seed,
                           p_swap=args.p_swap, cancel_cnots={args.lattice: args.cancel})
    if args.stream:
        from .noise import apply_noise_model
        from .sim import sample, write_detector_stream

        circuit, _ = build_circuit(args.lattice, variant, args.distance, cancel=args.cancel)
        batch = sample(apply_noise_model(circuit, args.p, args.p_swap), args.shots, args.seed)
        with open(args.stream, "wb") as fh:
            write_detector_stream(fh, batch)
    pt = simulate_point(cfg, args.lattice, variant, args.distance, args.p)
    sys.stdout.write(write_csv([pt]))
    return 0


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    if args.workers:
        cfg.workers = args.workers
    out = Path(args.output)
    pts = run_experiment(cfg, cache=out, progress=lambda r: print(
        f"{r.lattice} d={r.d} p={r.p:g}: {r.logical_errors}/{r.shots}", file=sys.stderr))
    if args.plot:
        Path(args.plot).write_text(json.dumps(plot_spec(pts), indent=1))
    return 0


def fit_report(points: list[Point]) -> dict:
    """Slopes per curve, slope agreement on the shared p_L window, and scale factors."""
    c = curves(points)
    if not c:
        raise FitError("no data points")
    report = {"slopes": {}, "agreement": {}, "scale": {}}
    for (lat, var, d), pts in sorted(c.items()):
        f = fit_slope(pts)
        report["slopes"][f"{lat}/{var}/d{d}"] = {"slope": f.slope, "stderr": f.stderr, "points": f.n_points}
    lattices = sorted({lat for lat, var, _ in c if var == "embedded"})
    dists = sorted({d for _, _, d in c})
    for lat in lattices:
        for d in dists:
            a, e = matched_window(c[(ABSTRACT_LATTICE, "abstract", d)], c[(lat, "embedded", d)])
            fa, fe = fit_slope(a), fit_slope(e)
            report["agreement"][f"{lat}/d{d}"] = {"abstract": fa.slope, "abstract_err": fa.stderr,
                                                  "embedded": fe.slope, "embedded_err": fe.stderr,
                                                  "agree_1sigma": slopes_agree(fa, fe)}
        s = fit_peff({d: c[(ABSTRACT_LATTICE, "abstract", d)] for d in dists},
                     {d: c[(lat, "embedded", d)] for d in dists})
        report["scale"][lat] = {"s": s.s, "low": s.low, "high": s.high}
    return report


def cmd_fit(args) -> int:
    pts = read_csv(Path(args.results).read_text())
    try:
        report = fit_report(pts)
    except (FitError, KeyError) as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_FIT
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epproute", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("route", help="search a unit-cell swap schedule")
    p.add_argument("--lattice", choices=LATTICES, required=True)
    p.add_argument("--max-swap-layers", type=int, default=8)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_route)

    def patch_args(p):
        p.add_argument("--lattice", choices=LATTICES, required=True)
        p.add_argument("-d", "--distance", type=int, default=3)
        p.add_argument("--table", help="move table CSV (default: the bundled schedule)")

    p = sub.add_parser("tile", help="lay a unit-cell schedule over a distance-d patch")
    patch_args(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--device-out")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("validate-schedule", help="re-check a schedule's swap classification")
    p.add_argument("schedule")
    p.add_argument("--device", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("embed", help="emit the physical memory circuit")
    patch_args(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--native-swaps", action="store_true")
    p.add_argument("--cancel", action="store_true", help="cancel back-to-back CNOTs")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("simulate", help="logical error rate at one point")
    p.add_argument("--lattice", choices=LATTICES + [ABSTRACT_LATTICE], required=True)
    p.add_argument("-d", "--distance", type=int, default=3)
    p.add_argument("-p", type=float, required=True)
    p.add_argument("--p-swap", type=float)
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--cancel", action="store_true")
    p.add_argument("--stream", help="also write sampled detectors to this binary file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a configured sweep to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--plot", help="vega-lite spec output")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="slopes and effective-noise scale from a sweep CSV")
    p.add_argument("results")
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UncertifiedSchedule as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
