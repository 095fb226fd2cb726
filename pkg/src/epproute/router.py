"""Greedy distance-minimising routing that only emits error-pattern-preserving SWAPs.

A SWAP is allowed when it is

* type-1: exactly one endpoint holds an abstract qubit (the other is a
  routing qubit), or
* type-2: both endpoints hold abstract qubits that share a CNOT in the
  computational layer right before or right after the swap sequence.

Anything else (two unrelated computational qubits, two routing qubits) is
forbidden.  Schedules carry their own certificate, re-checkable with
:func:`validate_schedule`.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .topology import DeviceGraph, InteractionGraph, geodesic_distance

Edge = tuple[int, int]


class SwapType(str, enum.Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"
    FORBIDDEN = "forbidden"


@dataclass(frozen=True)
class QubitMapping:
    """Injective assignment abstract qubit -> physical qubit at time ``time_index``."""

    assignment: dict[int, int]
    time_index: int = 0

    def __post_init__(self):
        if len(set(self.assignment.values())) != len(self.assignment):
            raise ValueError("qubit mapping is not injective")

    def __getitem__(self, q: int) -> int:
        return self.assignment[q]

    @property
    def inverse(self) -> dict[int, int]:
        return {v: k for k, v in self.assignment.items()}

    def swapped(self, edges: Iterable[Edge]) -> "QubitMapping":
        inv = self.inverse
        new = dict(self.assignment)
        for a, b in edges:
            qa, qb = inv.get(a), inv.get(b)
            if qa is not None:
                new[qa] = b
            if qb is not None:
                new[qb] = a
        return QubitMapping(new, self.time_index + 1)

    def image_ok(self, g: DeviceGraph) -> bool:
        nodes = set(g.nodes)
        return all(v in nodes for v in self.assignment.values())


@dataclass(frozen=True)
class SwapMove:
    edge: Edge
    swap_type: SwapType
    associated_op: Edge | None = None

    def __post_init__(self):
        if self.swap_type is SwapType.TYPE2 and self.associated_op is None:
            raise ValueError("type-2 swaps need an associated operation")


@dataclass
class SwapLayer:
    moves: list[SwapMove]


@dataclass
class ComputationalLayer:
    """Interaction edges (abstract pairs) executed together; ``layer`` is the CNOT layer index."""

    edges: list[Edge]
    layer: int | None = None


Item = SwapLayer | ComputationalLayer


@dataclass
class SwapSchedule:
    initial_mapping: QubitMapping
    items: list[Item]
    final_mapping: QubitMapping

    def mappings(self) -> Iterator[tuple[Item, QubitMapping]]:
        """Yield each item with the mapping in force when it starts."""
        m = self.initial_mapping
        for item in self.items:
            yield item, m
            if isinstance(item, SwapLayer):
                m = m.swapped(mv.edge for mv in item.moves)

    @property
    def swap_layers(self) -> list[SwapLayer]:
        return [it for it in self.items if isinstance(it, SwapLayer)]

    @property
    def n_swaps(self) -> int:
        return sum(len(l.moves) for l in self.swap_layers)

    def routing_qubits(self) -> set[int]:
        """Physical qubits that are ever touched by a swap while holding no abstract qubit."""
        out = set()
        for item, m in self.mappings():
            if isinstance(item, SwapLayer):
                inv = m.inverse
                for mv in item.moves:
                    out.update(x for x in mv.edge if x not in inv)
        return out

    def reversed(self) -> "SwapSchedule":
        """Run the same round backwards, starting where this one ends."""
        return SwapSchedule(
            QubitMapping(dict(self.final_mapping.assignment)),
            [_copy_item(it) for it in reversed(self.items)],
            QubitMapping(dict(self.initial_mapping.assignment)),
        )

    def to_json(self) -> str:
        items = []
        for it in self.items:
            if isinstance(it, SwapLayer):
                items.append({"swaps": [
                    {"edge": list(mv.edge), "type": mv.swap_type.value,
                     **({"op": list(mv.associated_op)} if mv.associated_op else {})}
                    for mv in it.moves]})
            else:
                items.append({"cnots": [list(e) for e in it.edges], "layer": it.layer})
        doc = {
            "initial_mapping": {str(k): v for k, v in sorted(self.initial_mapping.assignment.items())},
            "items": items,
            "final_mapping": {str(k): v for k, v in sorted(self.final_mapping.assignment.items())},
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "SwapSchedule":
        doc = json.loads(text)
        items: list[Item] = []
        for it in doc["items"]:
            if "swaps" in it:
                items.append(SwapLayer([
                    SwapMove(tuple(s["edge"]), SwapType(s["type"]),
                             tuple(s["op"]) if s.get("op") else None)
                    for s in it["swaps"]]))
            else:
                items.append(ComputationalLayer([tuple(e) for e in it["cnots"]], it.get("layer")))
        init = QubitMapping({int(k): v for k, v in doc["initial_mapping"].items()})
        final = QubitMapping({int(k): v for k, v in doc["final_mapping"].items()})
        return cls(init, items, final)


def _copy_item(it: Item) -> Item:
    if isinstance(it, SwapLayer):
        return SwapLayer(list(it.moves))
    return ComputationalLayer(list(it.edges), it.layer)


# ---------------------------------------------------------------------------


def objective(mapping: QubitMapping, pending: Iterable[Edge], g: DeviceGraph) -> int:
    total = 0
    for q1, q2 in pending:
        if q1 not in mapping.assignment or q2 not in mapping.assignment:
            raise KeyError(f"unmapped qubit in pending edge {(q1, q2)}")
        total += geodesic_distance(g, mapping[q1], mapping[q2])
    return total


def _shared_op(qa: int, qb: int, layers: Sequence[Iterable[Edge]]) -> Edge | None:
    for layer in layers:
        for e in layer:
            if set(e) == {qa, qb}:
                return tuple(e)
    return None


def classify_swap(edge: Edge, mapping: QubitMapping,
                  adjacent_layers: tuple[Iterable[Edge], Iterable[Edge]]) -> SwapType:
    return classify_swap_with_op(edge, mapping, adjacent_layers)[0]


def classify_swap_with_op(edge: Edge, mapping: QubitMapping,
                          adjacent_layers: tuple[Iterable[Edge], Iterable[Edge]]
                          ) -> tuple[SwapType, Edge | None]:
    inv = mapping.inverse
    qa, qb = inv.get(edge[0]), inv.get(edge[1])
    if (qa is None) != (qb is None):
        return SwapType.TYPE1, None
    if qa is None:
        return SwapType.FORBIDDEN, None
    op = _shared_op(qa, qb, adjacent_layers)
    if op is None:
        return SwapType.FORBIDDEN, None
    return SwapType.TYPE2, op


def _adjacent_computational(items: Sequence[Item], i: int) -> tuple[list[Edge], list[Edge]]:
    before: list[Edge] = []
    after: list[Edge] = []
    for j in range(i - 1, -1, -1):
        if isinstance(items[j], ComputationalLayer):
            before = items[j].edges
            break
    for j in range(i + 1, len(items)):
        if isinstance(items[j], ComputationalLayer):
            after = items[j].edges
            break
    return before, after


def validate_schedule(schedule: SwapSchedule, g: DeviceGraph,
                      ig: InteractionGraph | None = None) -> list[str]:
    """Re-check the EPP certificate; returns a list of violations (empty when valid)."""
    problems: list[str] = []
    if not schedule.initial_mapping.image_ok(g):
        problems.append("initial mapping leaves the device")
    executed: list[tuple[int, Edge]] = []
    m = schedule.initial_mapping
    for i, item in enumerate(schedule.items):
        if isinstance(item, SwapLayer):
            used: set[int] = set()
            adj = _adjacent_computational(schedule.items, i)
            for mv in item.moves:
                a, b = mv.edge
                if not g.has_edge(a, b):
                    problems.append(f"item {i}: swap {mv.edge} is not a device edge")
                if a in used or b in used:
                    problems.append(f"item {i}: swap {mv.edge} overlaps another swap")
                used.update(mv.edge)
                kind, op = classify_swap_with_op(mv.edge, m, adj)
                if kind is SwapType.FORBIDDEN:
                    problems.append(f"item {i}: swap {mv.edge} is forbidden")
                elif kind is not mv.swap_type:
                    problems.append(f"item {i}: swap {mv.edge} tagged {mv.swap_type.value}, is {kind.value}")
            m = m.swapped(mv.edge for mv in item.moves)
        else:
            used = set()
            for q1, q2 in item.edges:
                if q1 in used or q2 in used:
                    problems.append(f"item {i}: cnot {(q1, q2)} overlaps another gate")
                used.update((q1, q2))
                if not g.has_edge(m[q1], m[q2]):
                    problems.append(f"item {i}: cnot {(q1, q2)} endpoints not adjacent")
                executed.append((item.layer if item.layer is not None else -1, (q1, q2)))
    if m.assignment != schedule.final_mapping.assignment:
        problems.append("final mapping does not match the replayed swaps")
    if ig is not None:
        want = [(k, frozenset(e)) for k, layer in enumerate(ig.layered_edges) for e in layer]
        got = [(k, frozenset(e)) for k, e in executed]
        if sorted(want, key=repr) != sorted(got, key=repr):
            problems.append("executed cnots differ from the interaction graph")
        order = [k for k, _ in executed]
        if order != sorted(order):
            problems.append("cnot layers executed out of order")
    return problems


# ---------------------------------------------------------------------------
# greedy search


@dataclass
class RoutingFailure(Exception):
    message: str
    layer: int
    pending: list[Edge]
    mapping: QubitMapping
    partial: list[Item] = field(default_factory=list)

    def __str__(self):
        return f"{self.message} (layer {self.layer}, {len(self.pending)} pending edges)"


def _allowed(edge: Edge, m: QubitMapping, prev: list[Edge]) -> tuple[SwapType, Edge | None]:
    return classify_swap_with_op(edge, m, (prev, []))


def _delta(edge: Edge, m: QubitMapping, pending: list[Edge], g: DeviceGraph) -> int:
    inv = m.inverse
    touched = {inv[x] for x in edge if x in inv}
    rel = [e for e in pending if touched.intersection(e)]
    if not rel:
        return 0
    before = objective(m, rel, g)
    after = objective(m.swapped([edge]), rel, g)
    return after - before


def _best_swap(m: QubitMapping, pending: list[Edge], prev: list[Edge], g: DeviceGraph,
               blocked: set[int], depth: int) -> tuple[int, Edge | None]:
    best: tuple[int, Edge | None] = (0, None)
    for e in sorted(g.edges):
        if e[0] in blocked or e[1] in blocked:
            continue
        kind, _ = _allowed(e, m, prev)
        if kind is SwapType.FORBIDDEN:
            continue
        dlt = _delta(e, m, pending, g)
        if depth > 1 and dlt <= 0:
            follow, _ = _best_swap(m.swapped([e]), pending, prev, g, blocked | set(e), depth - 1)
            dlt += min(follow, 0)
        if dlt < best[0]:
            best = (dlt, e)
    return best


def _bfs_path(g: DeviceGraph, src: int, done, blocked: set[int]) -> list[int] | None:
    """Shortest walk from ``src`` to the first node satisfying ``done``, avoiding ``blocked``."""
    back = {src: None}
    frontier = deque([src])
    while frontier:
        v = frontier.popleft()
        if v != src and done(v):
            walk = [v]
            while back[walk[-1]] is not None:
                walk.append(back[walk[-1]])
            return walk[::-1]
        for n in g.adjacency[v]:
            if n not in back and n not in blocked:
                back[n] = v
                frontier.append(n)
    return None


def _stuck_swaps(m: QubitMapping, pending: list[Edge], prev: list[Edge], g: DeviceGraph) -> list[Edge]:
    """Swaps for a pending edge when the greedy step finds nothing.

    Edges are tried lowest id first.  Preferred is one distance-decreasing
    allowed swap of either endpoint.  Failing that, one endpoint walks a
    shortest path to its partner; each occupied site on the way is emptied
    by sliding the qubits between it and the nearest free site one step
    along (all type-1 swaps), and sites whose occupant cannot leave are
    routed around.  The whole sequence is returned so the next greedy step
    cannot undo it.  Empty when no pending edge admits a plan.
    """
    for q1, q2 in sorted(pending):
        here, there = m[q1], m[q2]
        for a, b in ((here, there), (there, here)):
            dist = geodesic_distance(g, a, b)
            for n in g.adjacency[a]:
                if geodesic_distance(g, n, b) < dist:
                    e = (min(a, n), max(a, n))
                    if _allowed(e, m, prev)[0] is not SwapType.FORBIDDEN:
                        return [e]
    occupied = set(m.inverse)
    for q1, q2 in sorted(pending):
        for a, b in ((m[q1], m[q2]), (m[q2], m[q1])):
            banned: set[int] = set()
            while True:
                path = _bfs_path(g, a, lambda v: v == b, banned)
                if path is None:
                    break
                plan, stuck_at = _slide_along(path, occupied, g)
                if stuck_at is None:
                    return plan
                banned.add(stuck_at)
    return []


def _slide_along(path: list[int], occupied: set[int], g: DeviceGraph) -> tuple[list[Edge], int | None]:
    """Type-1 swaps moving the qubit at ``path[0]`` next to ``path[-1]``.

    Returns the swaps, or the first path site whose occupant cannot be
    pushed to a free site.
    """
    out: list[Edge] = []
    occupied = set(occupied)
    there = path[-1]

    def swap(u, v):
        out.append((min(u, v), max(u, v)))
        occupied.symmetric_difference_update((u, v))

    cur = path[0]
    for n in path[1:-1]:
        if n in occupied:
            # push the occupant off the path if possible, else anywhere but the ends
            hole = (_bfs_path(g, n, lambda v: v not in occupied, set(path) - {n})
                    or _bfs_path(g, n, lambda v: v not in occupied, {cur, there}))
            if hole is None:
                return out, n
            for i in range(len(hole) - 2, -1, -1):
                swap(hole[i], hole[i + 1])
        swap(cur, n)
        cur = n
    return out, None


def route(ig: InteractionGraph, g: DeviceGraph, initial: QubitMapping, *,
          lookahead_depth: int = 1, max_steps: int = 1000, rng_seed: int = 0) -> SwapSchedule:
    """Greedy layer-by-layer routing.  Raises :class:`RoutingFailure` when stuck.

    ``rng_seed`` is accepted for interface stability; every choice here is
    already deterministic (lowest edge id on ties and when stuck).
    """
    if len(ig.nodes) > len(g.nodes):
        raise ValueError("device has fewer qubits than the interaction graph")
    if not initial.image_ok(g):
        raise ValueError("initial mapping leaves the device")
    m = initial
    items: list[Item] = []
    prev: list[Edge] = []
    steps = 0
    for k, layer in enumerate(ig.layered_edges):
        pending = [tuple(e) for e in layer]
        while pending:
            ready = [e for e in pending if g.has_edge(m[e[0]], m[e[1]])]
            if ready:
                items.append(ComputationalLayer(ready, k))
                prev = ready
                pending = [e for e in pending if e not in ready]
                continue
            if steps >= max_steps:
                raise RoutingFailure("max_steps exceeded", k, pending, m, items)
            steps += 1
            moves: list[SwapMove] = []
            blocked: set[int] = set()
            cur = m
            while True:
                dlt, e = _best_swap(cur, pending, prev, g, blocked, lookahead_depth)
                if e is None:
                    break
                kind, op = _allowed(e, cur, prev)
                moves.append(SwapMove(e, kind, op))
                blocked.update(e)
                cur = cur.swapped([e])
            if not moves:
                walk = _stuck_swaps(m, pending, prev, g)
                if not walk:
                    raise RoutingFailure("no allowed swap brings the pair closer", k, pending, m, items)
                for e in walk[:-1]:
                    kind, op = _allowed(e, m, prev)
                    items.append(SwapLayer([SwapMove(e, kind, op)]))
                    m = m.swapped([e])
                e = walk[-1]
                kind, op = _allowed(e, m, prev)
                moves.append(SwapMove(e, kind, op))
            items.append(SwapLayer(moves))
            m = m.swapped(mv.edge for mv in moves)
    return SwapSchedule(initial, items, QubitMapping(dict(m.assignment), m.time_index))
