"""Pauli channels, the effective embedded-CNOT channel, and the circuit noise model.

Paulis on n qubits are indexed by bit strings ``x0 z0 x1 z1 ...`` packed
little-endian into an integer (``I=0, X=1, Z=2, Y=3`` per qubit), so the
product of two Paulis (up to phase) is the XOR of their indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from .circuit import COMPUTATIONAL, SWAP_TYPE1, SWAP_TYPE2, GateKind, LayeredCircuit, compile_x_basis

LETTER = {0: "I", 1: "X", 2: "Z", 3: "Y"}
CODE = {v: k for k, v in LETTER.items()}


def pauli_label(index: int, n: int) -> str:
    return "".join(LETTER[(index >> (2 * i)) & 3] for i in range(n))


def pauli_index(label: str) -> int:
    return sum(CODE[c] << (2 * i) for i, c in enumerate(label))


@dataclass
class PauliChannel:
    """Probability vector over the 4**n Paulis on ``qubits``."""

    qubits: tuple[Hashable, ...]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (4 ** len(self.qubits),):
            raise ValueError("probability vector has the wrong length")

    @property
    def n(self) -> int:
        return len(self.qubits)

    def prob(self, label: str) -> float:
        return float(self.probs[pauli_index(label)])

    @property
    def error_probability(self) -> float:
        return float(1.0 - self.probs[0])

    def is_valid(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.probs >= -tol) and np.all(self.probs <= 1 + tol)
                    and abs(self.probs.sum() - 1.0) <= tol)

    def to_json(self) -> str:
        return json.dumps({pauli_label(i, self.n): float(p) for i, p in enumerate(self.probs)})

    @classmethod
    def identity(cls, qubits: Sequence[Hashable]) -> "PauliChannel":
        v = np.zeros(4 ** len(qubits))
        v[0] = 1.0
        return cls(tuple(qubits), v)

    @classmethod
    def depolarizing(cls, p: float, qubits: Sequence[Hashable]) -> "PauliChannel":
        n = len(qubits)
        v = np.full(4 ** n, p / (4 ** n - 1))
        v[0] = 1.0 - p
        return cls(tuple(qubits), v)

    @classmethod
    def from_terms(cls, qubits: Sequence[Hashable], terms: dict[str, float]) -> "PauliChannel":
        v = np.zeros(4 ** len(qubits))
        for lab, p in terms.items():
            v[pauli_index(lab)] += p
        v[0] = 1.0 - v[1:].sum()
        return cls(tuple(qubits), v)

    def embed(self, qubits: Sequence[Hashable]) -> "PauliChannel":
        """Same channel on a larger ordered support (identity elsewhere)."""
        qubits = tuple(qubits)
        pos = [qubits.index(q) for q in self.qubits]
        v = np.zeros(4 ** len(qubits))
        for i, p in enumerate(self.probs):
            if p == 0:
                continue
            j = 0
            for k, at in enumerate(pos):
                j |= ((i >> (2 * k)) & 3) << (2 * at)
            v[j] += p
        return PauliChannel(qubits, v)


def PauliChannel1(probs, qubit: Hashable = 0) -> PauliChannel:
    """Single-qubit channel from ``probs`` ordered (I, X, Y, Z)."""
    pi, px, py, pz = probs
    return PauliChannel((qubit,), np.array([pi, px, pz, py], dtype=float))


def PauliChannel2(probs: dict[str, float], qubits: tuple[Hashable, Hashable] = (0, 1)) -> PauliChannel:
    return PauliChannel.from_terms(qubits, probs)


def marginal_after_type1(ch: PauliChannel, keep: int = 0) -> PauliChannel:
    """Trace out one qubit of a two-qubit channel: p'_a = sum_b p_ab."""
    if ch.n != 2:
        raise ValueError("expects a two-qubit channel")
    v = np.zeros(4)
    for i, p in enumerate(ch.probs):
        v[(i >> (2 * keep)) & 3] += p
    return PauliChannel((ch.qubits[keep],), v)


def compose_channels(channels: Sequence[PauliChannel]) -> PauliChannel:
    """Exact composition of Pauli channels (XOR convolution on the joint support)."""
    support: list[Hashable] = []
    for ch in channels:
        for q in ch.qubits:
            if q not in support:
                support.append(q)
    out = PauliChannel.identity(support).probs
    idx = np.arange(out.size)
    for ch in channels:
        v = ch.embed(support).probs
        nxt = np.zeros_like(out)
        for i in np.nonzero(v)[0]:
            nxt[idx ^ i] += v[i] * out
        out = nxt
    return PauliChannel(tuple(support), out)


# ---------------------------------------------------------------------------
# effective model of an embedded CNOT


@dataclass(frozen=True)
class EffectiveNoiseParams:
    p: float | Fraction
    p_swap: float | Fraction
    n11: int = 0
    n12: int = 0
    n2: int = 0
    nbar1: float | Fraction = 0
    nbar2: float | Fraction = 0

    def __post_init__(self):
        for name in ("n11", "n12", "n2"):
            v = getattr(self, name)
            if v < 0 or int(v) != v:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.nbar1 < 0 or self.nbar2 < 0:
            raise ValueError("averages must be non-negative")


def effective_cnot_channel(params: EffectiveNoiseParams) -> PauliChannel:
    """Linear-order channel on a CNOT preceded by type-1 and type-2 swaps."""
    p, ps = params.p, params.p_swap
    single0 = (p + ps * (4 * params.n11 + params.n2)) / 15
    single1 = (p + ps * (4 * params.n12 + params.n2)) / 15
    both = (p + ps * params.n2) / 15
    v = np.zeros(16)
    for a in range(4):
        for b in range(4):
            if a == 0 and b == 0:
                continue
            i = a | (b << 2)
            v[i] = float(single0 if b == 0 else single1 if a == 0 else both)
    v[0] = float(1 - p - ps * (Fraction(4, 5) * (params.n11 + params.n12) + params.n2)
                 if isinstance(p, Fraction) else
                 1 - p - ps * (0.8 * (params.n11 + params.n12) + params.n2))
    ch = PauliChannel((0, 1), v)
    if not np.all((ch.probs >= 0) & (ch.probs <= 1)):
        raise ValueError("p too large for the linearised channel")
    return ch


def exact_effective_cnot_channel(params: EffectiveNoiseParams) -> PauliChannel:
    """Same scenario by exact composition (the oracle for the linear formula)."""
    p, ps = float(params.p), float(params.p_swap)
    swap = PauliChannel.depolarizing(ps, (0, 1))
    parts = [PauliChannel.depolarizing(p, (0, 1))]
    parts += [marginal_after_type1(PauliChannel.depolarizing(ps, (0, "r")))] * params.n11
    parts += [marginal_after_type1(PauliChannel.depolarizing(ps, (1, "r")))] * params.n12
    parts += [swap] * params.n2
    return compose_channels(parts).embed((0, 1))


def p_eff_prime(params: EffectiveNoiseParams):
    if isinstance(params.p, Fraction) or isinstance(params.p_swap, Fraction):
        return params.p + params.p_swap * (Fraction(4, 5) * Fraction(params.nbar1) + Fraction(params.nbar2))
    return params.p + params.p_swap * (0.8 * params.nbar1 + params.nbar2)


# ---------------------------------------------------------------------------
# circuit noise


FLIP_X, DEP1, DEP2 = 0, 1, 2
N_OPTIONS = {FLIP_X: 1, DEP1: 3, DEP2: 15}


@dataclass(frozen=True)
class NoiseSite:
    layer: int
    index: int  # gate position inside the layer
    kind: int  # FLIP_X, DEP1 or DEP2
    qubits: tuple[int, ...]
    prob: float
    before: bool  # measurement flips act before the gate
    role: str  # computational, swap_type1 or swap_type2


@dataclass
class NoisyCircuit:
    circuit: LayeredCircuit
    p: float
    p_swap: float
    sites: list[NoiseSite] = field(default_factory=list)

    def site_at(self) -> dict[tuple[int, int], int]:
        return {(s.layer, s.index): i for i, s in enumerate(self.sites)}


def apply_noise_model(circuit: LayeredCircuit, p: float, p_swap: float | None = None) -> NoisyCircuit:
    """Circuit-level depolarizing noise.

    prep_z and measure_z flip with X at rate p; Hadamards suffer X, Y, Z at
    p/3 each; CNOTs suffer each of the 15 two-qubit Paulis at p/15.  Native
    (undecomposed) SWAP gates are depolarizing with ``p_swap`` (3p unless
    given).  Idles are ideal.  X-basis prep and readout are compiled into
    Z operations and Hadamards first.
    """
    if not 0 <= p <= 0.75:
        raise ValueError("p must lie in [0, 3/4]")
    p_swap = 3 * p if p_swap is None else p_swap
    circuit = compile_x_basis(circuit)
    sites = []
    for i, j, g in circuit.gates:
        role = g.tag or COMPUTATIONAL
        if g.kind is GateKind.PREP_Z:
            sites.append(NoiseSite(i, j, FLIP_X, g.targets, p, False, role))
        elif g.kind is GateKind.MEASURE_Z:
            sites.append(NoiseSite(i, j, FLIP_X, g.targets, p, True, role))
        elif g.kind is GateKind.HADAMARD:
            sites.append(NoiseSite(i, j, DEP1, g.targets, p, False, role))
        elif g.kind is GateKind.CNOT:
            sites.append(NoiseSite(i, j, DEP2, g.targets, p, False, role))
        elif g.kind is GateKind.SWAP:
            sites.append(NoiseSite(i, j, DEP2, g.targets, p_swap, False, role))
    return NoisyCircuit(circuit, p, p_swap, sites)


SWAP_ROLES = (SWAP_TYPE1, SWAP_TYPE2)
