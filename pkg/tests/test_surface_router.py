import pytest

from epproute.circuit import SurfaceCodeSpec
from epproute.router import SwapType, validate_schedule
from epproute.surface_router import (
    CellModel,
    InvalidSchedule,
    MoveTable,
    SpeciesAssignment,
    enumerate_initial_placements,
    find_placements,
    load_golden_table,
    reverse_round,
    search_unit_cell_schedule,
    tile_schedule,
    validate_table,
)
from epproute.topology import SPECIES_ORDER, Species, UnitCellSpec, surface_code_interaction_graph

from conftest import LATTICES, tiled


def test_placement_counts():
    # ordered choices of 4 sites out of the cell
    assert len(enumerate_initial_placements(UnitCellSpec.for_kind("heavy_hexagonal"))) == 10 * 9 * 8 * 7
    assert len(enumerate_initial_placements(UnitCellSpec.for_kind("hexagonal"))) == 24


def test_placement_must_be_injective():
    with pytest.raises(ValueError):
        SpeciesAssignment({s: (0, 0) for s in SPECIES_ORDER})


@pytest.mark.parametrize("kind", LATTICES)
def test_golden_tables_validate(kind):
    t = load_golden_table(kind)
    tr = validate_table(t, kind)
    assert len(tr.positions) == len(t.columns) + 1


def test_heavy_hex_golden_counts():
    t = load_golden_table("heavy_hexagonal")
    assert t.columns == ["C1", "S1", "C2", "S2", "S3", "C3", "S4", "S5", "C4"]
    counts = validate_table(t, "heavy_hexagonal").type_counts()
    assert {s: c[0] for s, c in counts.items()} == {
        Species.X_DATA: 4, Species.Z_DATA: 3, Species.X_ANCILLA: 3, Species.Z_ANCILLA: 4}
    assert all(c[1] == 0 for c in counts.values())
    assert sum(c[0] for c in counts.values()) / 4 == 3.5


def test_hex_golden_has_one_type2_layer_and_no_routing_sites():
    t = load_golden_table("hexagonal")
    assert t.n_swap_layers == 1
    tr = validate_table(t, "hexagonal")
    assert all(c == (0, 1) for c in tr.type_counts().values())
    assert t.placement.routing_sites(UnitCellSpec.for_kind("hexagonal")) == []


def test_golden_displacement_is_not_rigid():
    tr = validate_table(load_golden_table("hexagonal"), "hexagonal")
    assert len(set(tr.displacement.values())) > 1


def test_bad_moves_rejected():
    with pytest.raises(ValueError):
        MoveTable(["C1"], {s: ["u"] if s is Species.X_DATA else ["x"] for s in SPECIES_ORDER})
    with pytest.raises(ValueError):
        MoveTable(["S1"], {s: ["-"] for s in SPECIES_ORDER})


def test_table_with_collision_is_invalid():
    t = load_golden_table("hexagonal")
    rows = {s: list(r) for s, r in t.rows.items()}
    j = t.columns.index(next(c for c in t.columns if c.startswith("S")))
    rows[Species.X_DATA][j] = "i"  # partner moves, X_DATA does not: no consistent swap
    with pytest.raises(InvalidSchedule):
        validate_table(MoveTable(t.columns, rows, t.placement), "hexagonal")


@pytest.mark.parametrize("kind", LATTICES)
def test_csv_round_trip(kind):
    t = load_golden_table(kind)
    back = MoveTable.from_csv(t.to_csv())
    assert back.columns == t.columns and back.rows == t.rows
    assert back.placement == t.placement


def test_reverse_of_idle_table_is_itself():
    t = MoveTable(["C1", "S1", "C2"], {s: ["-", "i", "-"] for s in SPECIES_ORDER})
    r = reverse_round(t)
    assert r.rows == t.rows


@pytest.mark.parametrize("kind", LATTICES)
def test_forward_then_reverse_returns_home(kind):
    t = load_golden_table(kind)
    model = CellModel(kind)
    fwd = model.run(t, t.placement)
    end = SpeciesAssignment(dict(fwd.positions[-1]))
    back = model.run(reverse_round(t), end)
    assert back.positions[-1] == fwd.positions[0]
    assert reverse_round(reverse_round(t)).rows == t.rows


def test_find_placements_recovers_golden():
    t = load_golden_table("hexagonal")
    assert t.placement in find_placements(MoveTable(t.columns, t.rows), "hexagonal")


@pytest.mark.parametrize("kind", LATTICES)
@pytest.mark.parametrize("d", [3, 5, 7])
def test_tiled_round_is_certified(kind, d):
    tr = tiled(kind, d)
    ig = surface_code_interaction_graph(d)
    assert validate_schedule(tr.schedule, tr.device, ig) == []
    assert all(mv.swap_type is not SwapType.FORBIDDEN for l in tr.schedule.swap_layers for mv in l.moves)


def test_hex_boundary_routing_sites():
    for d in (3, 5, 7):
        tr = tiled("hexagonal", d)
        assert tr.n_routing_qubits == len(tr.boundary_moves) == d - 1


def test_tile_schedule_needs_lattice():
    with pytest.raises(ValueError):
        tile_schedule(load_golden_table("hexagonal"), SurfaceCodeSpec(3))


def test_hex_search_finds_single_type2_layer():
    res = search_unit_cell_schedule("hexagonal")
    assert res.depth == 1 and res.placements_tried == 24
    tr = validate_table(res.table, "hexagonal", res.placement)
    assert all(c == (0, 1) for c in tr.type_counts().values())


def test_search_lookahead_not_implemented():
    with pytest.raises(NotImplementedError):
        search_unit_cell_schedule("hexagonal", lookahead=2)


@pytest.mark.slow
def test_heavy_hex_search_result_is_valid():
    res = search_unit_cell_schedule("heavy_hexagonal")
    assert res.depth <= 5
    assert sum(res.depths.values()) <= res.placements_tried == 5040
    validate_table(res.table, "heavy_hexagonal", res.placement)
