"""Acceptance criteria 1-10.  Each check calls ``record`` before asserting, and the
terminal summary prints one PASS/FAIL line per criterion."""

import itertools
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from epproute.decoder import Decoder, blossom_match, brute_force_min_weight, build_matching_graph
from epproute.embedder import bulk_round_depth, round_depth
from epproute.experiment import (
    ABSTRACT_LATTICE,
    ExperimentConfig,
    curves,
    fit_peff,
    fit_slope,
    matched_window,
    run_experiment,
    slopes_agree,
)
from epproute.noise import EffectiveNoiseParams, effective_cnot_channel, exact_effective_cnot_channel, p_eff_prime
from epproute.router import SwapType, validate_schedule
from epproute.sim import swap_spread_check, sweep_single_faults
from epproute.surface_router import (
    golden_round,
    load_golden_table,
    search_unit_cell_schedule,
    validate_table,
)
from epproute.topology import SurfacePatch, UnitCellSpec, surface_code_interaction_graph

from conftest import LATTICES, noisy, physical, record, tiled

ROOT = Path(__file__).resolve().parents[1]


# 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", LATTICES)
def test_c1_golden_schedules_are_certified(kind):
    t0 = time.perf_counter()
    bad, kinds = [], set()
    for d in (3, 5, 7):
        tr = golden_round(kind, d)
        ig = surface_code_interaction_graph(d)
        bad += [f"d={d}: {p}" for p in validate_schedule(tr.schedule, tr.device, ig)]
        kinds |= {mv.swap_type for l in tr.schedule.swap_layers for mv in l.moves}
    dt = time.perf_counter() - t0
    ok = not bad and SwapType.FORBIDDEN not in kinds and dt < 10
    record(1, kind, ok, f"{len(bad)} violations at d=3,5,7, {dt:.1f}s")
    assert not bad and dt < 10


# 2 ---------------------------------------------------------------------------

def test_c2_heavy_hex_search_depth():
    t0 = time.perf_counter()
    res = search_unit_cell_schedule("heavy_hexagonal")
    dt = time.perf_counter() - t0
    ok = res.depth <= 5 and dt < 600
    record(2, "heavy_hexagonal search", ok,
           f"{res.depth} swap layers over {res.placements_tried} placements, {dt:.0f}s")
    assert ok


def test_c2_hex_search_single_type2_layer():
    res = search_unit_cell_schedule("hexagonal")
    counts = validate_table(res.table, "hexagonal", res.placement).type_counts()
    type2_only = all(c == (0, 1) for c in counts.values())
    cell = UnitCellSpec.for_kind("hexagonal")
    routing = len(res.placement.routing_sites(cell))
    ok = res.depth == 1 and type2_only and routing == 0
    record(2, "hexagonal search", ok, f"{res.depth} layer(s), type-2 only={type2_only}, {routing} routing sites")
    assert ok


def test_c2_heavy_hex_golden_nbar1():
    counts = validate_table(load_golden_table("heavy_hexagonal"), "heavy_hexagonal").type_counts()
    nbar1 = Fraction(sum(c[0] for c in counts.values()), 4)
    record(2, "heavy_hexagonal golden n1 average", nbar1 == Fraction(7, 2), f"n1 = {nbar1}")
    assert nbar1 == Fraction(7, 2)


# 3 ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", LATTICES)
def test_c3_swap_fault_spreading(kind):
    t0 = time.perf_counter()
    tr = tiled(kind, 3)
    rep = swap_spread_check(noisy(physical(kind, 3, pack=False)), tr.schedule.initial_mapping.assignment,
                            SurfacePatch(3).num_qubits)
    dt = time.perf_counter() - t0
    ok = not rep.violations and dt < 300
    record(3, kind, ok, f"{rep.n_single} single and {rep.n_pairs} paired swap faults over "
                        f"{rep.n_slices} slices, {len(rep.violations)} violations, {dt:.1f}s")
    assert ok


# 4 ---------------------------------------------------------------------------

@pytest.mark.parametrize("basis", ["Z", "X"])
@pytest.mark.parametrize("kind", LATTICES)
def test_c4_every_single_fault_is_corrected(kind, basis):
    t0 = time.perf_counter()
    nc = noisy(physical(kind, 3, basis=basis))
    tab = sweep_single_faults(nc)
    g = build_matching_graph(nc, SurfacePatch(3), basis=basis,
                             initial=tiled(kind, 3).schedule.initial_mapping.assignment, table=tab)
    pred = Decoder(g).decode_batch(tab.detectors[:, g.nodes])
    wrong = int(np.count_nonzero(pred != tab.observables[:, 0]))
    dt = time.perf_counter() - t0
    record(4, f"{kind} {basis} basis", wrong == 0 and dt < 600,
           f"{wrong} logical errors over {tab.site.size} single faults, {dt:.1f}s")
    assert wrong == 0


# 5 ---------------------------------------------------------------------------

P = 1e-3


def _channel_deviation(ratio):
    worst_err, worst_id = 0.0, 0.0
    for n11, n12, n2 in itertools.product(range(3), repeat=3):
        prm = EffectiveNoiseParams(P, ratio * P, n11, n12, n2)
        dev = np.abs(effective_cnot_channel(prm).probs - exact_effective_cnot_channel(prm).probs)
        worst_err = max(worst_err, dev[1:].max())
        worst_id = max(worst_id, dev[0])
    return worst_err, worst_id


@pytest.mark.parametrize("ratio", [1, 3], ids=["p_swap=p", "p_swap=3p"])
def test_c5_error_entries(ratio):
    worst, _ = _channel_deviation(ratio)
    ok = worst <= 5 * P * P
    record(5, f"error entries, p_swap={ratio}p", ok, f"max deviation {worst / P**2:.2f} p^2 (bound 5 p^2)")
    assert ok


@pytest.mark.parametrize("ratio", [1, 3], ids=["p_swap=p", "p_swap=3p"])
def test_c5_no_error_entry(ratio):
    _, worst = _channel_deviation(ratio)
    ok = worst <= 5 * P * P
    record(5, f"no-error entry, p_swap={ratio}p", ok, f"max deviation {worst / P**2:.2f} p^2 (bound 5 p^2)")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c6_analytic_effective_rates():
    counts = validate_table(load_golden_table("heavy_hexagonal"), "heavy_hexagonal").type_counts()
    # per-CNOT averages: four CNOTs per species per round
    nbar1 = Fraction(sum(c[0] for c in counts.values()), 4) / 4
    hx = validate_table(load_golden_table("hexagonal"), "hexagonal").type_counts()
    nbar2 = Fraction(sum(c[1] for c in hx.values()), 4) / 4
    p = Fraction(1)
    heavy = p_eff_prime(EffectiveNoiseParams(p, 3 * p, nbar1=nbar1))
    hexa = p_eff_prime(EffectiveNoiseParams(p, p, nbar2=nbar2))
    ok = heavy == Fraction(31, 10) and hexa == Fraction(5, 4)
    record(6, "p_eff'", ok, f"heavy-hex {heavy} p = {float(heavy)} p, hexagonal {hexa} p = {float(hexa)} p")
    assert ok


# 7, 8 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep():
    cfg = ExperimentConfig.from_json((ROOT / "configs" / "acceptance.json").read_text())
    pts = run_experiment(cfg, cache=ROOT / "results" / "acceptance_sweep.csv")
    return cfg, curves(pts)


@pytest.mark.parametrize("d", [3, 5])
@pytest.mark.parametrize("kind", LATTICES)
def test_c7_slopes_agree(sweep, kind, d):
    cfg, c = sweep
    a, e = matched_window(c[(ABSTRACT_LATTICE, "abstract", d)], c[(kind, "embedded", d)])
    fa, fe = fit_slope(a), fit_slope(e)
    ok = slopes_agree(fa, fe) and min(p.shots for p in a + e) >= 10**6
    record(7, f"{kind} d={d} slope agreement", ok,
           f"embedded {fe.slope:.3f}±{fe.stderr:.3f} vs abstract {fa.slope:.3f}±{fa.stderr:.3f} "
           f"on {fe.n_points}/{fa.n_points} points of the shared window")
    assert ok


@pytest.mark.parametrize("d", [3, 5])
@pytest.mark.parametrize("curve", [ABSTRACT_LATTICE, *LATTICES])
def test_c7_slope_values(sweep, curve, d):
    _, c = sweep
    variant = "abstract" if curve == ABSTRACT_LATTICE else "embedded"
    f = fit_slope(c[(curve, variant, d)])
    target = (d + 1) // 2
    ok = abs(f.slope - target) <= 0.5 and f.n_points >= 4
    record(7, f"{curve} d={d} slope", ok, f"{f.slope:.3f}±{f.stderr:.3f} from {f.n_points} points (target {target}±0.5)")
    assert ok


BANDS = {"heavy_hexagonal": (2.3, 4.0), "hexagonal": (1.1, 1.4)}


@pytest.mark.parametrize("kind", LATTICES)
def test_c8_scale_band(sweep, kind):
    _, c = sweep
    ds = (3, 5)
    s = fit_peff({d: c[(ABSTRACT_LATTICE, "abstract", d)] for d in ds}, {d: c[(kind, "embedded", d)] for d in ds})
    per_d = {d: fit_peff(c[(ABSTRACT_LATTICE, "abstract", d)], c[(kind, "embedded", d)], bootstrap=0).s for d in ds}
    lo, hi = BANDS[kind]
    ok = lo <= s.s <= hi
    record(8, kind, ok, f"s = {s.s:.3f} [{s.low:.3f}, {s.high:.3f}], band [{lo}, {hi}]; "
                        + ", ".join(f"d={d} alone {v:.3f}" for d, v in per_d.items()))
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c9_heavy_hex_depth():
    tr = tiled("heavy_hexagonal", 3)
    finite = round_depth(tr.schedule, tr.device, 3)
    bulk = bulk_round_depth(load_golden_table("heavy_hexagonal"), "heavy_hexagonal")
    ok = finite <= 19 and bulk <= 19
    record(9, "heavy_hexagonal", ok, f"{bulk} timesteps in the bulk, {finite} on the d=3 patch (limit 19)")
    assert ok


def test_c9_hex_depth():
    tr = tiled("hexagonal", 3)
    finite = round_depth(tr.schedule, tr.device, 3, cancel_cnots=True)
    bulk = bulk_round_depth(load_golden_table("hexagonal"), "hexagonal", cancel_cnots=True)
    ok = bulk <= 5
    record(9, "hexagonal", ok, f"{bulk} timesteps in the bulk (limit 5); {finite} on the d=3 patch, "
                               f"where boundary type-1 swaps add a layer")
    assert ok


# 10 --------------------------------------------------------------------------

@pytest.mark.parametrize("d", [3, 5])
@pytest.mark.parametrize("kind", LATTICES)
def test_c10_decoder_is_exact(kind, d):
    t0 = time.perf_counter()
    g = build_matching_graph(noisy(physical(kind, d)), SurfacePatch(d),
                             initial=tiled(kind, d).schedule.initial_mapping.assignment)
    dec = Decoder(g)
    rng = np.random.default_rng(1000 * d + len(kind))
    n = g.num_nodes
    mismatches = blossom_off = 0
    for i in range(10_000):
        k = int(rng.integers(0, 13))
        defects = sorted(rng.choice(n, size=k, replace=False).tolist())
        got = dec.match(defects)[0]
        ref = brute_force_min_weight(defects, dec.tables)
        if abs(got - ref) > 1e-9 * max(1.0, ref):
            mismatches += 1
        if i < 300 and abs(blossom_match(defects, dec.tables)[0] - ref) > 1e-5 * max(1.0, ref):
            blossom_off += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and blossom_off == 0 and dt < 600
    record(10, f"{kind} d={d}", ok, f"{mismatches} mismatches in 10000 syndromes (0-12 defects), "
                                    f"blossom cross-check {blossom_off}/300 off, {dt:.0f}s")
    assert ok
