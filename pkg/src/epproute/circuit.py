"""Layered Clifford circuits and surface-code memory experiments.

Measurements carry string keys (``"a12.3"`` is ancilla 12 in round 3,
``"d4"`` the final readout of data qubit 4).  Detectors and the logical
observable are stored as key tuples, so they survive any re-layering of the
circuit; record indices are assigned on demand in (layer, target) order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .topology import Species, SurfacePatch


class GateKind(str, enum.Enum):
    PREP_Z = "prep_z"
    PREP_X = "prep_x"
    MEASURE_Z = "measure_z"
    MEASURE_X = "measure_x"
    CNOT = "cnot"
    HADAMARD = "hadamard"
    SWAP = "swap"
    IDLE = "idle"


TWO_QUBIT = {GateKind.CNOT, GateKind.SWAP}
MEASUREMENTS = {GateKind.MEASURE_Z, GateKind.MEASURE_X}

COMPUTATIONAL = "computational"
SWAP_TYPE1 = "swap_type1"
SWAP_TYPE2 = "swap_type2"


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple[int, ...]
    tag: str | None = None
    key: str | None = None  # measurement key, or the associated-op id of a swap constituent

    def __post_init__(self):
        want = 2 if self.kind in TWO_QUBIT else 1
        if len(self.targets) != want:
            raise ValueError(f"{self.kind.value} takes {want} target(s)")
        if want == 2 and self.targets[0] == self.targets[1]:
            raise ValueError("two-qubit gate on a single qubit")
        if self.kind is GateKind.SWAP and self.tag not in (SWAP_TYPE1, SWAP_TYPE2, None):
            raise ValueError("swap tag must be a swap type")


@dataclass
class LayeredCircuit:
    num_qubits: int
    layers: list[list[Gate]]
    roles: list[str]
    detectors: list[tuple[str, ...]] = field(default_factory=list)
    observables: list[tuple[str, ...]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.roles) != len(self.layers):
            raise ValueError("one role per layer")

    def validate(self) -> None:
        for i, layer in enumerate(self.layers):
            seen: set[int] = set()
            for g in layer:
                for t in g.targets:
                    if t in seen:
                        raise ValueError(f"layer {i}: qubit {t} used twice")
                    if not 0 <= t < self.num_qubits:
                        raise ValueError(f"layer {i}: qubit {t} out of range")
                    seen.add(t)
        keys = set(self.measurement_index)
        for det in self.detectors + self.observables:
            for k in det:
                if k not in keys:
                    raise ValueError(f"unknown measurement key {k}")

    @property
    def gates(self) -> Iterable[tuple[int, int, Gate]]:
        for i, layer in enumerate(self.layers):
            for j, g in enumerate(layer):
                yield i, j, g

    @cached_property
    def measurement_index(self) -> dict[str, int]:
        order = []
        for i, layer in enumerate(self.layers):
            for g in sorted((g for g in layer if g.kind in MEASUREMENTS), key=lambda g: g.targets):
                order.append(g.key)
        if len(set(order)) != len(order):
            raise ValueError("duplicate measurement keys")
        return {k: n for n, k in enumerate(order)}

    @property
    def num_measurements(self) -> int:
        return len(self.measurement_index)

    def detector_records(self) -> list[list[int]]:
        idx = self.measurement_index
        return [[idx[k] for k in det] for det in self.detectors]

    def observable_records(self) -> list[list[int]]:
        idx = self.measurement_index
        return [[idx[k] for k in obs] for obs in self.observables]

    def with_layers(self, layers: list[list[Gate]], roles: list[str]) -> "LayeredCircuit":
        return LayeredCircuit(self.num_qubits, layers, roles, list(self.detectors), list(self.observables))

    def count(self, kind: GateKind) -> int:
        return sum(1 for _, _, g in self.gates if g.kind is kind)

    def two_qubit_depth(self) -> int:
        return sum(1 for layer in self.layers if any(g.kind in TWO_QUBIT for g in layer))

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"QUBITS {self.num_qubits}"]
        for role, layer in zip(self.roles, self.layers):
            lines.append(f"LAYER {role}")
            for g in layer:
                parts = [g.kind.value.upper(), *map(str, g.targets)]
                if g.tag:
                    parts.append(f"#{g.tag}")
                if g.key:
                    parts.append(f"@{g.key}")
                lines.append(" ".join(parts))
            lines.append("")
        for det in self.detectors:
            lines.append("DETECTOR " + " ".join(det))
        for obs in self.observables:
            lines.append("OBSERVABLE " + " ".join(obs))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LayeredCircuit":
        n = 0
        layers: list[list[Gate]] = []
        roles: list[str] = []
        dets, obs = [], []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            head, *rest = line.split()
            if head == "QUBITS":
                n = int(rest[0])
            elif head == "LAYER":
                layers.append([])
                roles.append(rest[0])
            elif head == "DETECTOR":
                dets.append(tuple(rest))
            elif head == "OBSERVABLE":
                obs.append(tuple(rest))
            else:
                tag = key = None
                targets = []
                for tok in rest:
                    if tok.startswith("#"):
                        tag = tok[1:]
                    elif tok.startswith("@"):
                        key = tok[1:]
                    else:
                        targets.append(int(tok))
                layers[-1].append(Gate(GateKind(head.lower()), tuple(targets), tag, key))
        return cls(n, layers, roles, dets, obs)


def compile_x_basis(circuit: LayeredCircuit) -> LayeredCircuit:
    """Rewrite prep_x as prep_z;H and measure_x as H;measure_z (extra layers)."""
    layers: list[list[Gate]] = []
    roles: list[str] = []
    for role, layer in zip(circuit.roles, circuit.layers):
        preps = [g for g in layer if g.kind is GateKind.PREP_X]
        meas = [g for g in layer if g.kind is GateKind.MEASURE_X]
        if not preps and not meas:
            layers.append(list(layer))
            roles.append(role)
            continue
        if meas:
            layers.append([Gate(GateKind.HADAMARD, g.targets, g.tag) for g in meas])
            roles.append(role)
        body = []
        for g in layer:
            if g.kind is GateKind.PREP_X:
                body.append(replace(g, kind=GateKind.PREP_Z))
            elif g.kind is GateKind.MEASURE_X:
                body.append(replace(g, kind=GateKind.MEASURE_Z))
            else:
                body.append(g)
        layers.append(body)
        roles.append(role)
        if preps:
            layers.append([Gate(GateKind.HADAMARD, g.targets, g.tag) for g in preps])
            roles.append(role)
    return circuit.with_layers(layers, roles)


@dataclass(frozen=True)
class SurfaceCodeSpec:
    distance: int
    rounds: int | None = None
    logical_basis: str = "Z"

    def __post_init__(self):
        if self.distance < 3 or self.distance % 2 == 0:
            raise ValueError("distance must be odd and >= 3")
        if self.rounds is None:
            object.__setattr__(self, "rounds", self.distance)
        if self.rounds < 1:
            raise ValueError("need at least one round")
        if self.logical_basis not in ("Z", "X"):
            raise ValueError("logical basis is Z or X")

    @property
    def correctable_weight(self) -> int:
        return self.distance // 2


def anc_key(a: int, r: int) -> str:
    return f"a{a}.{r}"


def data_key(q: int) -> str:
    return f"d{q}"


def op_id(a: int, q: int) -> str:
    return f"{a}-{q}"


class MemoryCircuitBuilder:
    """Emits a memory experiment gate by gate through a time-varying qubit mapping.

    ``mapping`` arguments send abstract qubits to circuit wires; detectors
    and observables are phrased in abstract terms, so the same bookkeeping
    serves the abstract circuit (identity mapping) and routed circuits.
    """

    def __init__(self, patch: SurfacePatch, spec: SurfaceCodeSpec, num_qubits: int):
        self.patch = patch
        self.spec = spec
        self.num_qubits = num_qubits
        self.layers: list[list[Gate]] = []
        self.roles: list[str] = []

    def _emit(self, gates: list[Gate], role: str = COMPUTATIONAL):
        self.layers.append(gates)
        self.roles.append(role)

    def prep_round(self, mapping: Mapping[int, int], with_data: bool = False):
        gates = []
        if with_data:
            kind = GateKind.PREP_Z if self.spec.logical_basis == "Z" else GateKind.PREP_X
            gates += [Gate(kind, (mapping[q],)) for q in self.patch.data_qubits]
        for a in self.patch.ancillas:
            kind = GateKind.PREP_X if self.patch.species[a] is Species.X_ANCILLA else GateKind.PREP_Z
            gates.append(Gate(kind, (mapping[a],)))
        self._emit(gates)

    def cnot_gates(self, edges: Sequence[tuple[int, int]], mapping: Mapping[int, int]) -> list[Gate]:
        gates = []
        for a, q in edges:
            if self.patch.species[a] is Species.X_ANCILLA:
                c, t = a, q
            else:
                c, t = q, a
            gates.append(Gate(GateKind.CNOT, (mapping[c], mapping[t]), COMPUTATIONAL, op_id(a, q)))
        return gates

    def cnot_layer(self, edges: Sequence[tuple[int, int]], mapping: Mapping[int, int]):
        self._emit(self.cnot_gates(edges, mapping))

    def raw_layer(self, gates: list[Gate], role: str):
        self._emit(gates, role)

    def measure_round(self, r: int, mapping: Mapping[int, int]):
        gates = []
        for a in self.patch.ancillas:
            kind = GateKind.MEASURE_X if self.patch.species[a] is Species.X_ANCILLA else GateKind.MEASURE_Z
            gates.append(Gate(kind, (mapping[a],), key=anc_key(a, r)))
        self._emit(gates)

    def measure_data(self, mapping: Mapping[int, int]):
        kind = GateKind.MEASURE_Z if self.spec.logical_basis == "Z" else GateKind.MEASURE_X
        self._emit([Gate(kind, (mapping[q],), key=data_key(q)) for q in self.patch.data_qubits])

    def detectors(self, rounds: int, final: bool = True) -> list[tuple[str, ...]]:
        basis = self.spec.logical_basis
        dets: list[tuple[str, ...]] = []
        for r in range(rounds):
            for a in self.patch.ancillas:
                same = self.patch.species[a] is (Species.Z_ANCILLA if basis == "Z" else Species.X_ANCILLA)
                if r == 0:
                    if same:
                        dets.append((anc_key(a, 0),))
                else:
                    dets.append((anc_key(a, r - 1), anc_key(a, r)))
        if final:
            for a in self.patch.ancillas_of(basis):
                dets.append((anc_key(a, rounds - 1), *(data_key(q) for q in sorted(self.patch.support(a)))))
        return dets

    def build(self, rounds: int, final: bool = True) -> LayeredCircuit:
        obs = [tuple(data_key(q) for q in self.patch.logical(self.spec.logical_basis))] if final else []
        c = LayeredCircuit(self.num_qubits, self.layers, self.roles, self.detectors(rounds, final), obs)
        c.validate()
        return c


def cnot_order(r: int, reverse_odd_rounds: bool) -> list[int]:
    return [3, 2, 1, 0] if reverse_odd_rounds and r % 2 == 1 else [0, 1, 2, 3]


def build_se_round(spec: SurfaceCodeSpec) -> LayeredCircuit:
    """Prep, C1..C4, measure: one syndrome-extraction round without detectors."""
    patch = SurfacePatch(spec.distance)
    ident = {q: q for q in range(patch.num_qubits)}
    b = MemoryCircuitBuilder(patch, spec, patch.num_qubits)
    b.prep_round(ident)
    for k in range(4):
        b.cnot_layer(patch.cnot_layers[k], ident)
    b.measure_round(0, ident)
    c = LayeredCircuit(patch.num_qubits, b.layers, b.roles)
    c.validate()
    return c


def build_memory_experiment(spec: SurfaceCodeSpec, reverse_odd_rounds: bool = False) -> LayeredCircuit:
    """Data prep, ``spec.rounds`` SE rounds, transversal data readout.

    With ``reverse_odd_rounds`` the odd rounds run C4..C1, matching the
    CNOT order of routed circuits that undo their displacement every other
    round.
    """
    patch = SurfacePatch(spec.distance)
    ident = {q: q for q in range(patch.num_qubits)}
    b = MemoryCircuitBuilder(patch, spec, patch.num_qubits)
    for r in range(spec.rounds):
        b.prep_round(ident, with_data=(r == 0))
        for k in cnot_order(r, reverse_odd_rounds):
            b.cnot_layer(patch.cnot_layers[k], ident)
        b.measure_round(r, ident)
    b.measure_data(ident)
    return b.build(spec.rounds)
