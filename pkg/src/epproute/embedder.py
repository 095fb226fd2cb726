"""Turn a routed round into a physical memory-experiment circuit."""

from __future__ import annotations

from dataclasses import replace

from .circuit import (
    COMPUTATIONAL,
    SWAP_TYPE1,
    SWAP_TYPE2,
    Gate,
    GateKind,
    LayeredCircuit,
    MemoryCircuitBuilder,
    SurfaceCodeSpec,
    op_id,
)
from .router import ComputationalLayer, SwapLayer, SwapSchedule, SwapType, validate_schedule
from .topology import DeviceGraph, SurfacePatch


class UncertifiedSchedule(ValueError):
    pass


def swap_key(r: int, item: int, n: int, op: tuple[int, int] | None) -> str:
    base = f"sw{r}.{item}.{n}"
    return base if op is None else f"{base}|{op_id(*op)}"


def swap_op(key: str | None) -> str | None:
    """Associated computational op id encoded in a swap-constituent key."""
    if key and key.startswith("sw") and "|" in key:
        return key.split("|", 1)[1]
    return None


def _swap_gates(sched: SwapSchedule, i: int, layer: SwapLayer, m, r: int,
                decompose: bool, patch: SurfacePatch) -> list[list[Gate]]:
    if not decompose:
        return [[Gate(GateKind.SWAP, mv.edge,
                      SWAP_TYPE1 if mv.swap_type is SwapType.TYPE1 else SWAP_TYPE2,
                      swap_key(r, i, n, mv.associated_op))
                 for n, mv in enumerate(layer.moves)]]
    inv = m.inverse
    subs: list[list[Gate]] = [[], [], []]
    for n, mv in enumerate(layer.moves):
        a, b = mv.edge
        tag = SWAP_TYPE1 if mv.swap_type is SwapType.TYPE1 else SWAP_TYPE2
        if mv.associated_op is not None:
            # match the orientation of the associated CNOT so the pair can cancel
            anc, data = mv.associated_op
            ctrl = anc if patch.species[anc].is_x else data
            before = _neighbour_layer(sched, i, -1)
            after = _neighbour_layer(sched, i, +1)
            if before is not None and _has_op(before, mv.associated_op):
                first = m[ctrl]
            elif after is not None and _has_op(after, mv.associated_op):
                first = b if m[ctrl] == a else a
            else:
                first = m[ctrl]
        else:
            # computational qubit controls the first CNOT
            first = a if a in inv else b
        second = b if first == a else a
        key = swap_key(r, i, n, mv.associated_op)
        subs[0].append(Gate(GateKind.CNOT, (first, second), tag, key))
        subs[1].append(Gate(GateKind.CNOT, (second, first), tag, key))
        subs[2].append(Gate(GateKind.CNOT, (first, second), tag, key))
    return subs


def _neighbour_layer(sched: SwapSchedule, i: int, step: int) -> ComputationalLayer | None:
    j = i + step
    while 0 <= j < len(sched.items):
        if isinstance(sched.items[j], ComputationalLayer):
            return sched.items[j]
        j += step
    return None


def _has_op(layer: ComputationalLayer, op) -> bool:
    return any(set(e) == set(op) for e in layer.edges)


def emit_physical_circuit(schedule: SwapSchedule, spec: SurfaceCodeSpec, device: DeviceGraph | None = None, *,
                          decompose_swaps: bool = True, cancel_cnots: bool = False,
                          pack: bool = True) -> LayeredCircuit:
    """Memory experiment with ``schedule`` on even rounds and its reverse on odd rounds."""
    patch = SurfacePatch(spec.distance)
    if device is not None:
        problems = validate_schedule(schedule, device)
        if problems:
            raise UncertifiedSchedule("; ".join(problems[:3]))
        num_qubits = max(device.nodes) + 1
    else:
        problems = validate_schedule(schedule, _loose_device(schedule))
        if problems:
            raise UncertifiedSchedule("; ".join(problems[:3]))
        num_qubits = _loose_device(schedule).nodes[-1] + 1
    rounds = (schedule, schedule.reversed())
    b = MemoryCircuitBuilder(patch, spec, num_qubits)
    for r in range(spec.rounds):
        sched = rounds[r % 2]
        b.prep_round(sched.initial_mapping.assignment, with_data=(r == 0))
        for i, (item, m) in enumerate(sched.mappings()):
            if isinstance(item, ComputationalLayer):
                b.cnot_layer(item.edges, m.assignment)
            else:
                for layer in _swap_gates(sched, i, item, m, r, decompose_swaps, patch):
                    b.raw_layer(layer, "swap")
        b.measure_round(r, sched.final_mapping.assignment)
    b.measure_data(rounds[(spec.rounds - 1) % 2].final_mapping.assignment)
    circuit = b.build(spec.rounds)
    if cancel_cnots:
        circuit = cancel_adjacent_cnots(circuit)
    if pack:
        circuit = pack_layers(circuit)
    return circuit


def _loose_device(schedule: SwapSchedule) -> DeviceGraph:
    from .topology import LatticeKind

    nodes = set(schedule.initial_mapping.assignment.values())
    edges = set()
    for item, m in schedule.mappings():
        if isinstance(item, SwapLayer):
            for mv in item.moves:
                edges.add(tuple(sorted(mv.edge)))
                nodes.update(mv.edge)
        else:
            for q1, q2 in item.edges:
                edges.add(tuple(sorted((m[q1], m[q2]))))
    return DeviceGraph(tuple(sorted(nodes)), frozenset(edges), {n: (n, 0) for n in nodes},
                       LatticeKind.ROTATED_SQUARE)


def abstract_schedule(d: int) -> tuple[SwapSchedule, DeviceGraph]:
    """Swap-free schedule of the plain surface code on its own square lattice."""
    from .router import QubitMapping

    patch = SurfacePatch(d)
    ident = QubitMapping({q: q for q in range(patch.num_qubits)})
    items = [ComputationalLayer(list(patch.cnot_layers[k]), k) for k in range(4)]
    return SwapSchedule(ident, items, ident), patch.device_graph


def cancel_adjacent_cnots(circuit: LayeredCircuit) -> LayeredCircuit:
    """Remove back-to-back identical CNOTs, then re-attribute the survivors.

    When a computational CNOT cancels against one constituent of a type-2
    swap, the later surviving constituent takes over the computational role
    (and its noise); the earlier one keeps the swap role.
    """
    layers = [list(l) for l in circuit.layers]
    last: dict[int, tuple[int, int]] = {}  # qubit -> (layer, index) of its latest gate
    removed: set[tuple[int, int]] = set()
    handover: list[tuple[str, str]] = []  # (swap key, computational op key)
    for i, layer in enumerate(layers):
        for j, g in enumerate(layer):
            if g.kind is GateKind.CNOT:
                a, b = g.targets
                pa, pb = last.get(a), last.get(b)
                if pa is not None and pa == pb:
                    h = layers[pa[0]][pa[1]]
                    if h.kind is GateKind.CNOT and h.targets == g.targets:
                        removed.update((pa, (i, j)))
                        tags = {h.tag, g.tag}
                        if COMPUTATIONAL in tags and SWAP_TYPE2 in tags:
                            sw, cp = (h, g) if h.tag == SWAP_TYPE2 else (g, h)
                            handover.append((sw.key, cp.key))
                        del last[a], last[b]
                        continue
            for t in g.targets:
                last[t] = (i, j)
    out = [[g for j, g in enumerate(layer) if (i, j) not in removed] for i, layer in enumerate(layers)]
    for skey, ckey in handover:
        spots = [(i, j) for i, layer in enumerate(out) for j, g in enumerate(layer) if g.key == skey]
        if len(spots) != 2:
            raise RuntimeError(f"unexpected cancellation pattern for {skey}")
        i, j = spots[-1]
        out[i][j] = replace(out[i][j], tag=COMPUTATIONAL, key=ckey)
    keep = [(l, r) for l, r in zip(out, circuit.roles) if l]
    return circuit.with_layers([l for l, _ in keep], [r for _, r in keep])


def pack_layers(circuit: LayeredCircuit) -> LayeredCircuit:
    """Earliest-fit (ASAP) layering; per-qubit gate order is preserved."""
    free: dict[int, int] = {}
    placed: list[list[Gate]] = []
    for layer in circuit.layers:
        for g in layer:
            t = max((free.get(q, 0) for q in g.targets), default=0)
            while len(placed) <= t:
                placed.append([])
            placed[t].append(g)
            for q in g.targets:
                free[q] = t + 1
    roles = ["swap" if layer and all(g.tag in (SWAP_TYPE1, SWAP_TYPE2) for g in layer) else COMPUTATIONAL
             for layer in placed]
    return circuit.with_layers(placed, roles)


def round_depth(schedule: SwapSchedule, device: DeviceGraph | None, d: int, *,
                cancel_cnots: bool = False) -> int:
    """Two-qubit-gate depth of one decomposed, packed syndrome-extraction round."""
    c = emit_physical_circuit(schedule, SurfaceCodeSpec(d, rounds=1), device,
                              decompose_swaps=True, cancel_cnots=cancel_cnots, pack=True)
    return c.two_qubit_depth()


def depth_report(circuit: LayeredCircuit) -> dict:
    return {
        "layers": len(circuit.layers),
        "two_qubit_layers": circuit.two_qubit_depth(),
        "cnots": circuit.count(GateKind.CNOT),
        "per_layer": [{"role": r, "gates": len(l)} for r, l in zip(circuit.roles, circuit.layers)],
    }


def bulk_round_depth(table, kind, *, cancel_cnots: bool = False, cells: int = 4) -> int:
    """Packed two-qubit depth of one round of ``table`` on a boundary-free torus.

    Every translate of every species is instantiated on a ``cells x cells``
    torus of unit cells, so no qubit loses a partner to truncation.
    """
    from .surface_router import CellModel
    from .topology import DIRECTIONS, Species

    model = CellModel(kind)
    trace = model.run(table, table.placement)
    px, py = model.period
    w, h = cells * px, cells * py

    def wire(c):
        return (c[1] % h) * w + (c[0] % w)

    layers: list[list[Gate]] = []
    roles: list[str] = []
    cnot_cols: dict[int, dict[frozenset, Gate]] = {}
    for j, lab in enumerate(table.columns):
        if table.is_swap(j):
            continue
        gates = {}
        for s in (Species.X_ANCILLA, Species.Z_ANCILLA):
            m = table.move(s, j)
            if m == "-":
                continue
            for ci in range(cells):
                for cj in range(cells):
                    a = model.translate((ci, cj))
                    p = (trace.positions[j][s][0] + a[0], trace.positions[j][s][1] + a[1])
                    q = (p[0] + DIRECTIONS[m][0], p[1] + DIRECTIONS[m][1])
                    pair = (wire(p), wire(q)) if s is Species.X_ANCILLA else (wire(q), wire(p))
                    gates[frozenset(pair)] = Gate(GateKind.CNOT, pair, COMPUTATIONAL, f"c{j}:{pair[0]}-{pair[1]}")
        cnot_cols[j] = gates
    for j, lab in enumerate(table.columns):
        if not table.is_swap(j):
            layers.append(list(cnot_cols[j].values()))
            roles.append(COMPUTATIONAL)
            continue
        prev = next((cnot_cols[i] for i in range(j - 1, -1, -1) if i in cnot_cols), {})
        nxt = next((cnot_cols[i] for i in range(j + 1, len(table.columns)) if i in cnot_cols), {})
        subs: list[list[Gate]] = [[], [], []]
        seen = set()
        types = {sw.species: sw.swap_type for sw in trace.swaps[j]}
        for s, st in types.items():
            for ci in range(cells):
                for cj in range(cells):
                    a = model.translate((ci, cj))
                    p = (trace.positions[j][s][0] + a[0], trace.positions[j][s][1] + a[1])
                    dx, dy = DIRECTIONS[table.move(s, j)]
                    e = (wire(p), wire((p[0] + dx, p[1] + dy)))
                    if frozenset(e) in seen:
                        continue
                    seen.add(frozenset(e))
                    tag = SWAP_TYPE1 if st is SwapType.TYPE1 else SWAP_TYPE2
                    first, second = e
                    key = f"sw{j}:{e[0]}-{e[1]}"
                    if st is SwapType.TYPE2:
                        if frozenset(e) in prev:
                            first, second = prev[frozenset(e)].targets
                            key += "|" + prev[frozenset(e)].key
                        else:
                            first, second = nxt[frozenset(e)].targets
                            key += "|" + nxt[frozenset(e)].key
                    subs[0].append(Gate(GateKind.CNOT, (first, second), tag, key))
                    subs[1].append(Gate(GateKind.CNOT, (second, first), tag, key))
                    subs[2].append(Gate(GateKind.CNOT, (first, second), tag, key))
        layers.extend(subs)
        roles.extend(["swap"] * 3)
    c = LayeredCircuit(w * h, layers, roles)
    if cancel_cnots:
        c = cancel_adjacent_cnots(c)
    return pack_layers(c).two_qubit_depth()
