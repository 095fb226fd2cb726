"""Unit-cell routing for the rotated surface code.

Every qubit of the code belongs to one of four species (X/Z data, X/Z
ancilla).  A schedule moves all lattice translates of a species the same
way, so a whole syndrome-extraction round is described by a small table:
one row per species and one column per CNOT layer (partner direction) or
SWAP layer (move direction, ``i`` for idle).  ``-`` in a CNOT column marks a
species that does not act in that column.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .circuit import SurfaceCodeSpec
from .router import ComputationalLayer, QubitMapping, SwapLayer, SwapMove, SwapSchedule, SwapType
from .topology import (
    DIRECTIONS,
    INVERSE_MOVE,
    SPECIES_ORDER,
    Coord,
    DeviceGraph,
    LatticeKind,
    PeriodicLattice,
    Species,
    SurfacePatch,
    UnitCellSpec,
    abstract_partner,
    graph_from_coords,
)

MOVES = "udlri"


def _add(a: Coord, b: Coord) -> Coord:
    return (a[0] + b[0], a[1] + b[1])


def _sub(a: Coord, b: Coord) -> Coord:
    return (a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class SpeciesAssignment:
    placement: dict[Species, Coord]

    def __post_init__(self):
        if set(self.placement) != set(SPECIES_ORDER):
            raise ValueError("all four species must be placed")
        if len(set(self.placement.values())) != 4:
            raise ValueError("species placement is not injective")

    def routing_sites(self, cell: UnitCellSpec) -> list[Coord]:
        used = set(self.placement.values())
        return [c for c in cell.cell_nodes if c not in used]


@dataclass
class MoveTable:
    columns: list[str]
    rows: dict[Species, list[str]]
    placement: SpeciesAssignment | None = None

    def __post_init__(self):
        for s in SPECIES_ORDER:
            if len(self.rows[s]) != len(self.columns):
                raise ValueError(f"row {s.value} has the wrong length")
            for lab, m in zip(self.columns, self.rows[s]):
                ok = MOVES if lab.startswith("S") else MOVES + "-"
                if m not in ok:
                    raise ValueError(f"bad move {m!r} in column {lab}")

    def is_swap(self, j: int) -> bool:
        return self.columns[j].startswith("S")

    @property
    def n_swap_layers(self) -> int:
        return sum(1 for c in self.columns if c.startswith("S"))

    def cnot_layer(self, j: int) -> int:
        """CNOT layer index (0..3) of computational column ``j``."""
        return int(self.columns[j][1:].split(".")[0]) - 1

    def move(self, s: Species, j: int) -> str:
        return self.rows[s][j]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["species", *self.columns]
        if self.placement:
            header.append("site")
        w.writerow(header)
        for s in SPECIES_ORDER:
            row = [s.value, *self.rows[s]]
            if self.placement:
                x, y = self.placement.placement[s]
                row.append(f"{x} {y}")
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MoveTable":
        rows = list(csv.reader(io.StringIO(text)))
        header = [h.strip() for h in rows[0]]
        has_site = header[-1] == "site"
        columns = header[1:-1] if has_site else header[1:]
        table: dict[Species, list[str]] = {}
        sites: dict[Species, Coord] = {}
        for r in rows[1:]:
            if not r:
                continue
            s = Species(r[0].strip())
            table[s] = [x.strip() for x in r[1:1 + len(columns)]]
            if has_site:
                x, y = r[-1].split()
                sites[s] = (int(x), int(y))
        return cls(columns, table, SpeciesAssignment(sites) if has_site else None)


def load_golden_table(kind: LatticeKind | str) -> MoveTable:
    kind = LatticeKind(kind)
    text = resources.files("epproute").joinpath("data", f"{kind.value}.csv").read_text()
    return MoveTable.from_csv(text)


def enumerate_initial_placements(cell: UnitCellSpec) -> list[SpeciesAssignment]:
    if cell.n_nodes < 4:
        raise ValueError("unit cell needs at least 4 sites")
    return [SpeciesAssignment(dict(zip(SPECIES_ORDER, p)))
            for p in itertools.permutations(cell.cell_nodes, 4)]


def reverse_round(table: MoveTable) -> MoveTable:
    cols = list(reversed(table.columns))
    rows = {}
    for s in SPECIES_ORDER:
        seq = list(reversed(table.rows[s]))
        rows[s] = [INVERSE_MOVE[m] if c.startswith("S") else m for c, m in zip(cols, seq)]
    return MoveTable(cols, rows, None)


# ---------------------------------------------------------------------------
# species-level simulation on the infinite lattice


class InvalidSchedule(ValueError):
    pass


@dataclass
class SpeciesSwap:
    species: Species
    move: str
    swap_type: SwapType
    partner: Species | None  # None for a routing site


@dataclass
class CellTrace:
    positions: list[dict[Species, Coord]]  # before each column, plus the final one
    swaps: list[list[SpeciesSwap]]  # per column (empty for CNOT columns)

    def type_counts(self) -> dict[Species, tuple[int, int]]:
        out = {s: [0, 0] for s in SPECIES_ORDER}
        for col in self.swaps:
            for sw in col:
                out[sw.species][0 if sw.swap_type is SwapType.TYPE1 else 1] += 1
        return {s: (a, b) for s, (a, b) in out.items()}

    @property
    def displacement(self) -> dict[Species, Coord]:
        return {s: _sub(self.positions[-1][s], self.positions[0][s]) for s in SPECIES_ORDER}


class CellModel:
    """Tracks one representative per species; translates follow by symmetry."""

    def __init__(self, kind: LatticeKind | str):
        self.lat = PeriodicLattice(kind)
        self.cell = UnitCellSpec.for_kind(kind)
        self.period = self.lat.period

    def translate(self, cell: Coord) -> Coord:
        return (cell[0] * self.period[0], cell[1] * self.period[1])

    def instance_cell(self, pos: dict[Species, Coord], s: Species, c: Coord) -> Coord | None:
        """Abstract cell of the translate of ``s`` sitting at ``c``, or None."""
        dx, dy = _sub(c, pos[s])
        px, py = self.period
        if dx % px or dy % py:
            return None
        return (dx // px, dy // py)

    def partner_pos(self, pos: dict[Species, Coord], s: Species, layer: int) -> Coord:
        ps, off = abstract_partner(s, layer)
        return _add(pos[ps], self.translate(off))

    def cnot_ready(self, pos: dict[Species, Coord], s: Species, layer: int) -> bool:
        return self.lat.has_edge(pos[s], self.partner_pos(pos, s, layer))

    def distance(self, pos: dict[Species, Coord], s: Species, layer: int) -> int:
        return self.lat.distance(pos[s], self.partner_pos(pos, s, layer))

    def apply_swaps(self, pos: dict[Species, Coord], moves: dict[Species, str],
                    prev_layer: int | None, next_layer: int | None,
                    prev_active: Iterable[Species] = SPECIES_ORDER,
                    next_active: Iterable[Species] = SPECIES_ORDER,
                    ) -> tuple[dict[Species, Coord], list[SpeciesSwap]]:
        """One SWAP layer; raises InvalidSchedule for inconsistent or forbidden moves."""
        prev_active, next_active = set(prev_active), set(next_active)
        px, py = self.period
        out: list[SpeciesSwap] = []
        pairs: set[frozenset] = set()
        new = dict(pos)
        for s in SPECIES_ORDER:
            m = moves[s]
            if m == "i":
                continue
            src = pos[s]
            dst = _add(src, DIRECTIONS[m])
            if not self.lat.has_edge(src, dst):
                raise InvalidSchedule(f"{s.value} cannot move {m} from {src}")
            new[s] = dst
            pairs.add(frozenset({(src[0] % px, src[1] % py), (dst[0] % px, dst[1] % py)}))
            occupant = None
            for s2 in SPECIES_ORDER:
                c2 = self.instance_cell(pos, s2, dst)
                if c2 is not None:
                    occupant = (s2, c2)
            if occupant is None:
                out.append(SpeciesSwap(s, m, SwapType.TYPE1, None))
                continue
            s2, c2 = occupant
            if moves[s2] != INVERSE_MOVE[m]:
                raise InvalidSchedule(f"{s.value} moves {m} into {s2.value} which does not move back")
            shared = any(
                lay is not None and s in active and abstract_partner(s, lay) == (s2, c2)
                for lay, active in ((prev_layer, prev_active), (next_layer, next_active))
            )
            if not shared:
                raise InvalidSchedule(f"forbidden swap {s.value}<->{s2.value}")
            out.append(SpeciesSwap(s, m, SwapType.TYPE2, s2))
        seen: set = set()
        for pair in pairs:
            if len(pair) != 2 or seen & pair:
                raise InvalidSchedule("swaps overlap modulo the lattice")
            seen |= pair
        return new, out

    def run(self, table: MoveTable, placement: SpeciesAssignment) -> CellTrace:
        pos = dict(placement.placement)
        for c in pos.values():
            if not self.lat.is_node(c):
                raise InvalidSchedule(f"{c} is not a lattice site")
        positions = [dict(pos)]
        swaps: list[list[SpeciesSwap]] = []
        cols = table.columns
        for j, lab in enumerate(cols):
            if table.is_swap(j):
                prev_j = next((i for i in range(j - 1, -1, -1) if not table.is_swap(i)), None)
                next_j = next((i for i in range(j + 1, len(cols)) if not table.is_swap(i)), None)

                def info(i):
                    if i is None:
                        return None, ()
                    return table.cnot_layer(i), [s for s in SPECIES_ORDER if table.move(s, i) != "-"]

                pl, pa = info(prev_j)
                nl, na = info(next_j)
                pos, sw = self.apply_swaps(pos, {s: table.move(s, j) for s in SPECIES_ORDER}, pl, nl, pa, na)
                swaps.append(sw)
            else:
                k = table.cnot_layer(j)
                for s in SPECIES_ORDER:
                    m = table.move(s, j)
                    if m == "-":
                        continue
                    want = self.partner_pos(pos, s, k)
                    if _add(pos[s], DIRECTIONS[m]) != want or not self.lat.has_edge(pos[s], want):
                        raise InvalidSchedule(f"{lab}: {s.value} partner is not at {m}")
                swaps.append([])
            positions.append(dict(pos))
        # every species must see each CNOT layer exactly once
        for s in SPECIES_ORDER:
            seen = [table.cnot_layer(j) for j in range(len(cols))
                    if not table.is_swap(j) and table.move(s, j) != "-"]
            if sorted(seen) != [0, 1, 2, 3] or seen not in (sorted(seen), sorted(seen)[::-1]):
                raise InvalidSchedule(f"{s.value} does not run the CNOT layers in order")
        return CellTrace(positions, swaps)


def validate_table(table: MoveTable, kind: LatticeKind | str,
                   placement: SpeciesAssignment | None = None) -> CellTrace:
    placement = placement or table.placement
    if placement is None:
        raise ValueError("table has no placement")
    return CellModel(kind).run(table, placement)


def find_placements(table: MoveTable, kind: LatticeKind | str) -> list[SpeciesAssignment]:
    model = CellModel(kind)
    out = []
    for pl in enumerate_initial_placements(model.cell):
        try:
            model.run(table, pl)
        except InvalidSchedule:
            continue
        out.append(pl)
    return out


# ---------------------------------------------------------------------------
# greedy unit-cell search


@dataclass
class SearchResult:
    table: MoveTable
    placement: SpeciesAssignment
    depth: int
    placements_tried: int
    depths: dict[int, int] = field(default_factory=dict)  # depth -> number of placements


class SearchFailure(RuntimeError):
    pass


def _cnot_pairs(layer: int) -> list[tuple[Species, Species]]:
    return [(s, abstract_partner(s, layer)[0]) for s in (Species.X_DATA, Species.Z_DATA)]


def _greedy(model: CellModel, placement: SpeciesAssignment, max_swap_layers: int) -> MoveTable | None:
    pos = dict(placement.placement)
    columns: list[str] = []
    rows: dict[Species, list[str]] = {s: [] for s in SPECIES_ORDER}
    n_swaps = 0
    prev_layer: int | None = None
    prev_active: list[Species] = []
    for k in range(4):
        pending = _cnot_pairs(k)
        part = 0
        while pending:
            ready = [(a, b) for a, b in pending if model.cnot_ready(pos, a, k)]
            if ready:
                part += 1
                columns.append(f"C{k + 1}" if part == 1 else f"C{k + 1}.{part}")
                active = {x for pair in ready for x in pair}
                for s in SPECIES_ORDER:
                    if s in active:
                        d = _sub(model.partner_pos(pos, s, k), pos[s])
                        rows[s].append(next(m for m, v in DIRECTIONS.items() if v == d))
                    else:
                        rows[s].append("-")
                pending = [p for p in pending if p not in ready]
                prev_layer, prev_active = k, sorted(active)
                continue
            if n_swaps >= max_swap_layers:
                return None
            r_now = sum(model.distance(pos, a, k) for a, _ in pending)
            best = None
            options = []
            for s in SPECIES_ORDER:
                opts = ["i"] + [m for m in "udlr" if model.lat.has_edge(pos[s], _add(pos[s], DIRECTIONS[m]))]
                options.append(opts)
            for combo in itertools.product(*options):
                moves = dict(zip(SPECIES_ORDER, combo))
                if all(m == "i" for m in combo):
                    continue
                try:
                    new, _ = model.apply_swaps(pos, moves, prev_layer, None, prev_active, ())
                except InvalidSchedule:
                    continue
                r = sum(model.distance(new, a, k) for a, _ in pending)
                key = (r, sum(m != "i" for m in combo), combo)
                if best is None or key < best[0]:
                    best = (key, new, combo)
            if best is None or best[0][0] >= r_now:
                return None
            n_swaps += 1
            columns.append(f"S{n_swaps}")
            for s, m in zip(SPECIES_ORDER, best[2]):
                rows[s].append(m)
            pos = best[1]
    return MoveTable(columns, rows, placement)


def search_unit_cell_schedule(cell: UnitCellSpec | LatticeKind | str, *, max_swap_layers: int = 8,
                              lookahead: int = 1) -> SearchResult:
    """Greedy search over every initial placement; returns the shallowest schedule.

    Ties in depth go to the first placement in enumeration order.  Only
    ``lookahead=1`` (plain greedy) is implemented.
    """
    if lookahead != 1:
        raise NotImplementedError("only one-step greedy search is implemented")
    kind = cell.kind if isinstance(cell, UnitCellSpec) else LatticeKind(cell)
    model = CellModel(kind)
    placements = enumerate_initial_placements(model.cell)
    best: tuple[int, MoveTable] | None = None
    depths: dict[int, int] = {}
    for pl in placements:
        tab = _greedy(model, pl, max_swap_layers)
        if tab is None:
            continue
        try:
            model.run(tab, pl)
        except InvalidSchedule as exc:  # pragma: no cover - search emits only valid moves
            raise AssertionError(f"search produced an invalid table: {exc}") from exc
        depth = tab.n_swap_layers
        depths[depth] = depths.get(depth, 0) + 1
        if best is None or depth < best[0]:
            best = (depth, tab)
    if best is None:
        raise SearchFailure(f"no schedule within {max_swap_layers} swap layers")
    return SearchResult(best[1], best[1].placement, best[0], len(placements), dict(sorted(depths.items())))


# ---------------------------------------------------------------------------
# tiling onto a finite patch


@dataclass
class TiledRound:
    """A move table laid out on a distance-d patch of the device."""

    patch: SurfacePatch
    device: DeviceGraph
    schedule: SwapSchedule
    dropped_moves: list[tuple[int, int]]  # (abstract qubit, column): partner cut off, qubit stays
    boundary_moves: list[tuple[int, int]]  # (abstract qubit, column): partner cut off, type-1 instead

    @property
    def n_routing_qubits(self) -> int:
        """Physical qubits beyond those holding the code."""
        return len(self.device.nodes) - self.patch.num_qubits


class _Broken(Exception):
    def __init__(self, pair, column):
        self.pair, self.column = pair, column


def _lay_out(table: MoveTable, patch: SurfacePatch, model: CellModel, start: dict[int, Coord],
             bulk_type2: set[tuple[Species, int]], keep: set[tuple[int, int]]):
    pos = dict(start)
    steps: list[tuple[str, object]] = []
    dropped: list[tuple[int, int]] = []
    for j in range(len(table.columns)):
        if table.is_swap(j):
            at = {c: q for q, c in pos.items()}
            moves = []
            done: set[int] = set()
            for q in sorted(pos):
                m = table.move(patch.species[q], j)
                if m == "i" or q in done:
                    continue
                dst = _add(pos[q], DIRECTIONS[m])
                other = at.get(dst)
                if other is not None:
                    if table.move(patch.species[other], j) != INVERSE_MOVE[m]:
                        raise ValueError("inconsistent reciprocal move after tiling")
                    moves.append((q, other, pos[q], dst))
                    done.update((q, other))
                elif (patch.species[q], j) in bulk_type2 and (q, j) not in keep:
                    dropped.append((q, j))
                else:
                    moves.append((q, None, pos[q], dst))
                    done.add(q)
            steps.append(("swap", (j, moves)))
            for q, other, a, b in moves:
                pos[q] = b
                if other is not None:
                    pos[other] = a
        else:
            k = table.cnot_layer(j)
            edges = []
            for a in patch.ancillas:
                m = table.move(patch.species[a], j)
                if m == "-":
                    continue
                q = patch.partner(a, k)
                if q is None:
                    continue
                if not model.lat.has_edge(pos[a], pos[q]):
                    raise _Broken((a, q), j)
                if _add(pos[a], DIRECTIONS[m]) != pos[q]:
                    raise ValueError(f"C{k + 1}: data {q} is not in direction {m} of ancilla {a}")
                edges.append((a, q))
            steps.append(("cnot", (k, edges)))
    return steps, dropped


def tile_schedule(table: MoveTable, spec: SurfaceCodeSpec, g: DeviceGraph | None = None,
                  kind: LatticeKind | str | None = None) -> TiledRound:
    """Lay one round of ``table`` over the distance-``spec.distance`` patch.

    Abstract cell ``(i, j)`` of the code goes to device cell ``(i, j)``.  A
    type-2 move whose partner is cut off by the patch boundary is dropped
    (the qubit stays put) unless a later CNOT needs the qubit where the move
    would have taken it; then it becomes a type-1 swap with the vacant site.
    CNOTs with a missing partner are not emitted.
    """
    if kind is None:
        if g is None:
            raise ValueError("need a device graph or a lattice kind")
        kind = g.kind
    kind = LatticeKind(kind)
    placement = table.placement
    if placement is None:
        found = find_placements(table, kind)
        if not found:
            raise ValueError("table does not fit this lattice")
        placement = found[0]
    model = CellModel(kind)
    try:
        trace = model.run(table, placement)
    except InvalidSchedule as exc:
        raise ValueError(f"table/lattice mismatch: {exc}") from exc
    bulk_type2 = {(sw.species, j) for j, col in enumerate(trace.swaps)
                  for sw in col if sw.swap_type is SwapType.TYPE2}
    patch = SurfacePatch(spec.distance)
    start: dict[int, Coord] = {}
    for q, (ax, ay) in enumerate(patch.coords):
        start[q] = _add(placement.placement[patch.species[q]], model.translate((ax // 2, ay // 2)))

    keep: set[tuple[int, int]] = set()
    while True:
        try:
            steps, dropped = _lay_out(table, patch, model, start, bulk_type2, keep)
            break
        except _Broken as br:
            cands = [(j, q) for q, j in _lay_out_dropped_before(table, patch, model, start, bulk_type2,
                                                                 keep, br.column)
                     if q in br.pair]
            if not cands:
                raise ValueError(f"boundary CNOT {br.pair} cannot be executed") from None
            j, q = max(cands)
            keep.add((q, j))

    sites = set(start.values())
    for what, payload in steps:
        if what == "swap":
            sites.update(b for _, _, _, b in payload[1])
    device = g if g is not None else graph_from_coords(kind, sites, model.lat)
    node = device.node_at
    missing = [c for c in sites if c not in node]
    if missing:
        raise ValueError(f"device graph lacks sites {sorted(missing)[:4]}")
    mapping = QubitMapping({q: node[c] for q, c in start.items()})
    items = []
    m = mapping
    for i, (what, payload) in enumerate(steps):
        if what == "cnot":
            k, edges = payload
            items.append(ComputationalLayer(edges, k))
            continue
        before = next((p[1][1] for p in reversed(steps[:i]) if p[0] == "cnot"), [])
        after = next((p[1][1] for p in steps[i + 1:] if p[0] == "cnot"), [])
        layer = []
        for q, other, a, b in payload[1]:
            e = (min(node[a], node[b]), max(node[a], node[b]))
            if other is None:
                layer.append(SwapMove(e, SwapType.TYPE1))
                continue
            op = next((tuple(e2) for e2 in list(before) + list(after) if set(e2) == {q, other}), None)
            if op is None:
                raise ValueError(f"swap {q}<->{other} shares no adjacent CNOT")
            layer.append(SwapMove(e, SwapType.TYPE2, op))
        items.append(SwapLayer(layer))
        m = m.swapped(mv.edge for mv in layer)
    return TiledRound(patch, device, SwapSchedule(mapping, items, m), dropped, sorted(keep))


def _lay_out_dropped_before(table, patch, model, start, bulk_type2, keep, column):
    """Moves dropped before ``column`` in a partial layout (the run stops at the break)."""
    trunc = MoveTable(table.columns[:column], {s: r[:column] for s, r in table.rows.items()})
    try:
        _, dropped = _lay_out(trunc, patch, model, start, bulk_type2, keep)
    except _Broken:  # pragma: no cover - earlier columns already passed
        return []
    return dropped


def golden_round(kind: LatticeKind | str, d: int) -> TiledRound:
    return tile_schedule(load_golden_table(kind), SurfaceCodeSpec(d), kind=kind)
