"""Device graphs, interaction graphs, lattice generators and surface-code patches.

All lattices live on an integer grid with ``y`` pointing down, so the move
letters map to ``u=(0,-1)``, ``d=(0,1)``, ``l=(-1,0)``, ``r=(1,0)``.

Heavy-hexagonal lattice (4x4 cell, 10 nodes)::

    o-o-o-o      y % 2 == 0: chain rows, every x
    o . . .      y % 4 == 1: bridge at x % 4 == 0
    o-o-o-o
    . . o .      y % 4 == 3: bridge at x % 4 == 2

Hexagonal (brick-wall) lattice: every site of the grid, all horizontal
edges, and a vertical edge from ``(x, y)`` down to ``(x, y+1)`` when
``x + y`` is even.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

Coord = tuple[int, int]

DIRECTIONS: dict[str, Coord] = {"u": (0, -1), "d": (0, 1), "l": (-1, 0), "r": (1, 0), "i": (0, 0)}
INVERSE_MOVE = {"u": "d", "d": "u", "l": "r", "r": "l", "i": "i"}


def direction_of(delta: Coord) -> str:
    for k, v in DIRECTIONS.items():
        if v == tuple(delta):
            return k
    raise ValueError(f"{delta} is not a unit grid step")


class LatticeKind(str, enum.Enum):
    HEAVY_HEXAGONAL = "heavy_hexagonal"
    HEXAGONAL = "hexagonal"
    ROTATED_SQUARE = "rotated_square"


class Species(str, enum.Enum):
    X_DATA = "X_data"
    Z_DATA = "Z_data"
    X_ANCILLA = "X_ancilla"
    Z_ANCILLA = "Z_ancilla"

    @property
    def is_data(self) -> bool:
        return self in (Species.X_DATA, Species.Z_DATA)

    @property
    def is_x(self) -> bool:
        return self in (Species.X_DATA, Species.X_ANCILLA)


SPECIES_ORDER = (Species.X_DATA, Species.Z_DATA, Species.X_ANCILLA, Species.Z_ANCILLA)


# ---------------------------------------------------------------------------
# infinite lattices


class PeriodicLattice:
    """Membership, adjacency and distance on an infinite lattice."""

    def __init__(self, kind: LatticeKind | str):
        self.kind = LatticeKind(kind)
        if self.kind is LatticeKind.HEAVY_HEXAGONAL:
            self.period = (4, 4)
        else:
            self.period = (2, 2)
        px, py = self.period
        self.cell_nodes: tuple[Coord, ...] = tuple(
            (x, y) for y in range(py) for x in range(px) if self.is_node((x, y))
        )
        self._dist_cache: dict[Coord, dict[Coord, int]] = {}

    def is_node(self, c: Coord) -> bool:
        x, y = c
        if self.kind is LatticeKind.HEAVY_HEXAGONAL:
            if y % 2 == 0:
                return True
            return (y % 4 == 1 and x % 4 == 0) or (y % 4 == 3 and x % 4 == 2)
        return True

    def has_edge(self, a: Coord, b: Coord) -> bool:
        if not (self.is_node(a) and self.is_node(b)):
            return False
        dx, dy = b[0] - a[0], b[1] - a[1]
        if abs(dx) + abs(dy) != 1:
            return False
        if self.kind is LatticeKind.HEXAGONAL and dx == 0:
            top = a if dy == 1 else b
            return (top[0] + top[1]) % 2 == 0
        return True

    def neighbors(self, c: Coord) -> list[Coord]:
        out = []
        for m in "udlr":
            dx, dy = DIRECTIONS[m]
            n = (c[0] + dx, c[1] + dy)
            if self.has_edge(c, n):
                out.append(n)
        return out

    @property
    def max_degree(self) -> int:
        return max(len(self.neighbors(c)) for c in self.cell_nodes)

    def reduce(self, c: Coord) -> tuple[Coord, Coord]:
        """Split ``c`` into (cell index, coordinate inside the base cell)."""
        px, py = self.period
        cell = (c[0] // px, c[1] // py)
        return cell, (c[0] - cell[0] * px, c[1] - cell[1] * py)

    def distance(self, a: Coord, b: Coord, radius: int = 40) -> int:
        """Geodesic distance, using translation invariance of the lattice."""
        cell, base = self.reduce(a)
        px, py = self.period
        shifted = (b[0] - cell[0] * px, b[1] - cell[1] * py)
        table = self._dist_cache.get(base)
        if table is None:
            table = self._bfs(base, radius)
            self._dist_cache[base] = table
        if shifted not in table:
            raise ValueError(f"{b} is outside the distance window around {a}")
        return table[shifted]

    def _bfs(self, src: Coord, radius: int) -> dict[Coord, int]:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            c = queue.popleft()
            if dist[c] >= radius:
                continue
            for n in self.neighbors(c):
                if n not in dist:
                    dist[n] = dist[c] + 1
                    queue.append(n)
        return dist


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class UnitCellSpec:
    kind: LatticeKind
    cell_nodes: tuple[Coord, ...]
    lattice_vectors: tuple[Coord, Coord]

    @property
    def n_nodes(self) -> int:
        return len(self.cell_nodes)

    @classmethod
    def for_kind(cls, kind: LatticeKind | str) -> "UnitCellSpec":
        lat = PeriodicLattice(kind)
        px, py = lat.period
        return cls(lat.kind, lat.cell_nodes, ((px, 0), (0, py)))


@dataclass
class DeviceGraph:
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    coords: dict[int, Coord]
    kind: LatticeKind
    unit_cell: UnitCellSpec | None = None

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("duplicate node ids")
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if a > b:
                raise ValueError("edges must be stored as (low, high)")
            if a not in node_set or b not in node_set:
                raise ValueError(f"edge {(a, b)} has an undeclared endpoint")

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            adj[a].append(b)
            adj[b].append(a)
        return {n: tuple(sorted(v)) for n, v in adj.items()}

    @property
    def max_degree(self) -> int:
        return max((len(v) for v in self.adjacency.values()), default=0)

    @cached_property
    def node_at(self) -> dict[Coord, int]:
        return {c: n for n, c in self.coords.items()}

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    @cached_property
    def _index(self) -> dict[int, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs hop distances, -1 where unreachable."""
        n = len(self.nodes)
        idx = self._index
        rows = [idx[a] for a, b in self.edges] + [idx[b] for a, b in self.edges]
        cols = [idx[b] for a, b in self.edges] + [idx[a] for a, b in self.edges]
        m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        d = shortest_path(m, unweighted=True, directed=False)
        d[np.isinf(d)] = -1
        return d.astype(np.int64)

    def to_json(self) -> str:
        doc = {
            "kind": self.kind.value,
            "nodes": [{"id": n, "x": self.coords[n][0], "y": self.coords[n][1]} for n in self.nodes],
            "edges": [list(e) for e in sorted(self.edges)],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DeviceGraph":
        doc = json.loads(text)
        kind = LatticeKind(doc["kind"])
        nodes = tuple(int(n["id"]) for n in doc["nodes"])
        coords = {int(n["id"]): (int(n["x"]), int(n["y"])) for n in doc["nodes"]}
        edges = frozenset((min(a, b), max(a, b)) for a, b in doc["edges"])
        cell = None if kind is LatticeKind.ROTATED_SQUARE else UnitCellSpec.for_kind(kind)
        return cls(nodes, edges, coords, kind, cell)


def geodesic_distance(g: DeviceGraph, a: int, b: int) -> int:
    idx = g._index
    if a not in idx or b not in idx:
        raise KeyError(f"unknown node {a if a not in idx else b}")
    d = int(g.distance_matrix[idx[a], idx[b]])
    if d < 0:
        raise ValueError(f"nodes {a} and {b} are disconnected")
    return d


def graph_from_coords(kind: LatticeKind | str, coords: Iterable[Coord],
                      lattice: PeriodicLattice | None = None) -> DeviceGraph:
    """Induced subgraph of the infinite lattice on ``coords``.

    Ids are row-major over cells, then intra-cell index.
    """
    kind = LatticeKind(kind)
    lat = lattice or PeriodicLattice(kind if kind is not LatticeKind.ROTATED_SQUARE else LatticeKind.HEXAGONAL)
    coords = set(coords)
    if kind is LatticeKind.ROTATED_SQUARE:
        period = (2, 2)
        intra = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (1, 1): 3}

        def edge_ok(a, b):
            return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
    else:
        period = lat.period
        intra = {c: i for i, c in enumerate(lat.cell_nodes)}
        edge_ok = lat.has_edge
    px, py = period

    def key(c):
        cx, cy = c[0] // px, c[1] // py
        return (cy, cx, intra[(c[0] - cx * px, c[1] - cy * py)])

    ordered = sorted(coords, key=key)
    ids = {c: i for i, c in enumerate(ordered)}
    edges = set()
    for c in ordered:
        for m in "dr":
            dx, dy = DIRECTIONS[m]
            n = (c[0] + dx, c[1] + dy)
            if n in ids and edge_ok(c, n):
                edges.add((min(ids[c], ids[n]), max(ids[c], ids[n])))
    cell = None if kind is LatticeKind.ROTATED_SQUARE else UnitCellSpec.for_kind(kind)
    return DeviceGraph(tuple(range(len(ordered))), frozenset(edges), {i: c for c, i in ids.items()}, kind, cell)


def build_lattice(kind: LatticeKind | str, extent: tuple[int, int]) -> DeviceGraph:
    """Tile ``extent = (columns, rows)`` unit cells of ``kind``.

    For ``rotated_square`` the extent is the number of data qubits per side
    and the result is the surface-code patch itself (data plus ancilla
    positions with nearest-neighbour couplings).  Degree-0 nodes are dropped.
    """
    try:
        kind = LatticeKind(kind)
    except ValueError:
        raise ValueError(f"unsupported lattice kind {kind!r}") from None
    m, n = extent
    if m < 1 or n < 1:
        raise ValueError("extent components must be >= 1")
    if kind is LatticeKind.ROTATED_SQUARE:
        if m != n:
            raise ValueError("rotated_square patches are square")
        patch = SurfacePatch(m)
        return graph_from_coords(kind, patch.coords)
    lat = PeriodicLattice(kind)
    px, py = lat.period
    coords = [(cx * px + x, cy * py + y) for cy in range(n) for cx in range(m) for x, y in lat.cell_nodes]
    g = graph_from_coords(kind, coords, lat)
    used = {a for e in g.edges for a in e}
    if len(used) == len(coords):
        return g
    return graph_from_coords(kind, [g.coords[i] for i in sorted(used)], lat)


# ---------------------------------------------------------------------------
# interaction graph and surface-code patch


@dataclass
class InteractionGraph:
    nodes: tuple[int, ...]
    layered_edges: list[list[tuple[int, int]]]

    def __post_init__(self):
        for k, layer in enumerate(self.layered_edges):
            seen: set[int] = set()
            for a, b in layer:
                if a in seen or b in seen or a == b:
                    raise ValueError(f"layer {k} has overlapping supports")
                seen.update((a, b))

    @property
    def n_layers(self) -> int:
        return len(self.layered_edges)


# partner direction per species in each CNOT layer
CNOT_DIRECTIONS: dict[Species, str] = {
    Species.X_DATA: "drlu",
    Species.Z_DATA: "dlru",
    Species.X_ANCILLA: "ulrd",
    Species.Z_ANCILLA: "urld",
}

SPECIES_OFFSET: dict[Species, Coord] = {
    Species.X_DATA: (0, 0),
    Species.X_ANCILLA: (1, 0),
    Species.Z_ANCILLA: (0, 1),
    Species.Z_DATA: (1, 1),
}


def species_at(c: Coord) -> Species:
    return {v: k for k, v in SPECIES_OFFSET.items()}[(c[0] % 2, c[1] % 2)]


def abstract_partner(species: Species, layer: int) -> tuple[Species, Coord]:
    """Species and abstract-cell offset of the CNOT partner in ``layer``."""
    ox, oy = SPECIES_OFFSET[species]
    dx, dy = DIRECTIONS[CNOT_DIRECTIONS[species][layer]]
    tx, ty = ox + dx, oy + dy
    return species_at((tx, ty)), (tx // 2, ty // 2)


@dataclass
class SurfacePatch:
    """Rotated surface code of distance ``d`` placed on the abstract grid.

    Data qubit (row r, column c) sits at ``(c - r + d - 1, c + r)``; the
    plaquette whose top corner is data (r, c) has its ancilla one step
    below that corner.  X-type plaquettes close the left and right sides,
    Z-type plaquettes the top and bottom.  The logical Z runs down column 0,
    the logical X along row 0.
    """

    d: int
    coords: list[Coord] = field(init=False)
    species: list[Species] = field(init=False)

    def __post_init__(self):
        d = self.d
        if d < 3 or d % 2 == 0:
            raise ValueError("distance must be odd and >= 3")
        pos = set()
        self._data_rc: dict[Coord, tuple[int, int]] = {}
        for r in range(d):
            for c in range(d):
                p = (c - r + d - 1, c + r)
                pos.add(p)
                self._data_rc[p] = (r, c)
        for r in range(-1, d):
            for c in range(-1, d):
                interior = 0 <= r <= d - 2 and 0 <= c <= d - 2
                side = (c in (-1, d - 1)) and 0 <= r <= d - 2
                cap = (r in (-1, d - 1)) and 0 <= c <= d - 2
                x_type = (c + r) % 2 == 1
                if interior or (side and x_type) or (cap and not x_type):
                    pos.add((c - r + d - 1, c + r + 1))
        g = graph_from_coords(LatticeKind.ROTATED_SQUARE, pos)
        self.coords = [g.coords[i] for i in g.nodes]
        self.species = [species_at(c) for c in self.coords]
        self._graph = g

    @property
    def num_qubits(self) -> int:
        return len(self.coords)

    @cached_property
    def index(self) -> dict[Coord, int]:
        return {c: i for i, c in enumerate(self.coords)}

    @property
    def data_qubits(self) -> list[int]:
        return [i for i, s in enumerate(self.species) if s.is_data]

    @property
    def ancillas(self) -> list[int]:
        return [i for i, s in enumerate(self.species) if not s.is_data]

    def ancillas_of(self, basis: str) -> list[int]:
        want = Species.X_ANCILLA if basis == "X" else Species.Z_ANCILLA
        return [i for i, s in enumerate(self.species) if s is want]

    def row_col(self, q: int) -> tuple[int, int]:
        return self._data_rc[self.coords[q]]

    @property
    def device_graph(self) -> DeviceGraph:
        return self._graph

    def partner(self, q: int, layer: int) -> int | None:
        c = self.coords[q]
        dx, dy = DIRECTIONS[CNOT_DIRECTIONS[self.species[q]][layer]]
        return self.index.get((c[0] + dx, c[1] + dy))

    @cached_property
    def cnot_layers(self) -> list[list[tuple[int, int]]]:
        """Per layer, (ancilla, data) pairs in ancilla order."""
        layers = []
        for k in range(4):
            layer = []
            for a in self.ancillas:
                q = self.partner(a, k)
                if q is not None:
                    layer.append((a, q))
            layers.append(layer)
        return layers

    def support(self, ancilla: int) -> list[int]:
        return [q for k in range(4) for a, q in self.cnot_layers[k] if a == ancilla]

    def logical(self, basis: str) -> list[int]:
        """Data qubits of the logical operator of type ``basis``."""
        if basis == "Z":
            return sorted(q for q in self.data_qubits if self.row_col(q)[1] == 0)
        return sorted(q for q in self.data_qubits if self.row_col(q)[0] == 0)


def surface_code_interaction_graph(d: int) -> InteractionGraph:
    patch = SurfacePatch(d)
    return InteractionGraph(tuple(range(patch.num_qubits)), [list(l) for l in patch.cnot_layers])

