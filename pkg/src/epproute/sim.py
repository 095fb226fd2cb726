"""Pauli-frame simulation: Monte Carlo sampling and deterministic fault injection.

Frames are bit-packed: ``X[q, w]`` holds the X component on qubit ``q`` for
64 shots at once.  The same engine runs sampled shots (faults drawn from the
noise model) and exhaustive sweeps (shot ``i`` carries exactly fault ``i``).
"""

from __future__ import annotations

import io
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numba
import numpy as np

from .circuit import COMPUTATIONAL, SWAP_TYPE1, SWAP_TYPE2, Gate, GateKind, LayeredCircuit
from .noise import FLIP_X, N_OPTIONS, NoisyCircuit, SWAP_ROLES

ONE = np.uint64(1)


# ---------------------------------------------------------------------------
# single-frame reference semantics


@dataclass
class PauliFrame:
    x: np.ndarray
    z: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "PauliFrame":
        return cls(np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))

    def copy(self) -> "PauliFrame":
        return PauliFrame(self.x.copy(), self.z.copy())

    def __xor__(self, other: "PauliFrame") -> "PauliFrame":
        return PauliFrame(self.x ^ other.x, self.z ^ other.z)

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))


def propagate(frame: PauliFrame, gate: Gate) -> PauliFrame:
    """Conjugate ``frame`` through ``gate`` (measurements leave it unchanged)."""
    f = frame.copy()
    k = gate.kind
    if k is GateKind.CNOT:
        c, t = gate.targets
        f.x[t] ^= f.x[c]
        f.z[c] ^= f.z[t]
    elif k is GateKind.HADAMARD:
        (q,) = gate.targets
        f.x[q], f.z[q] = frame.z[q], frame.x[q]
    elif k is GateKind.SWAP:
        a, b = gate.targets
        f.x[[a, b]] = frame.x[[b, a]]
        f.z[[a, b]] = frame.z[[b, a]]
    elif k in (GateKind.PREP_Z, GateKind.PREP_X):
        (q,) = gate.targets
        f.x[q] = f.z[q] = False
    return f


def measurement_flip(frame: PauliFrame, gate: Gate) -> bool:
    (q,) = gate.targets
    return bool(frame.z[q] if gate.kind is GateKind.MEASURE_X else frame.x[q])


# ---------------------------------------------------------------------------
# faults


@dataclass(frozen=True)
class FaultPath:
    """Faults as (site index, Pauli index) pairs; the weight counts distinct sites."""

    faults: tuple[tuple[int, int], ...] = ()

    @property
    def weight(self) -> int:
        return len({s for s, _ in self.faults})


@dataclass
class ErrorPattern:
    pauli: dict[int, str]  # abstract qubit -> X, Y or Z
    weight: int  # weight of the generating fault path

    @property
    def support(self) -> set[int]:
        return set(self.pauli)


@dataclass
class FaultEvents:
    """Per-qubit Pauli kicks: layer, before-gate flag, qubit, shot, x bit, z bit."""

    layer: np.ndarray
    before: np.ndarray
    qubit: np.ndarray
    shot: np.ndarray
    x: np.ndarray
    z: np.ndarray

    @classmethod
    def empty(cls) -> "FaultEvents":
        e = np.zeros(0, dtype=np.int64)
        return cls(e, e.astype(bool), e, e, e.astype(bool), e.astype(bool))


def _pauli_bits(kind: np.ndarray, pauli: np.ndarray):
    """Split Pauli indices into per-qubit (x, z) bits for qubit slots 0 and 1."""
    x0 = np.where(kind == FLIP_X, True, (pauli & 1) > 0)
    z0 = np.where(kind == FLIP_X, False, (pauli & 2) > 0)
    x1 = (pauli & 4) > 0
    z1 = (pauli & 8) > 0
    return x0, z0, x1, z1


class CompiledCircuit:
    """Array form of a noisy circuit for the packed engine.

    ``ideal_tags`` lists gate tags whose CNOTs are replaced by the identity
    (used to isolate the effect of swap faults).
    """

    def __init__(self, noisy: NoisyCircuit, *, ideal_tags: Iterable[str] = ()):
        self.noisy = noisy
        c = noisy.circuit
        self.circuit = c
        self.num_qubits = c.num_qubits
        ideal = set(ideal_tags)
        mi = c.measurement_index
        self.num_measurements = len(mi)
        self.ops: list[list[tuple]] = []
        for layer in c.layers:
            by = {}
            for g in layer:
                if g.kind is GateKind.CNOT and (g.tag or COMPUTATIONAL) in ideal:
                    continue
                by.setdefault(g.kind, []).append(g)
            ops = []
            for kind, gs in by.items():
                t = np.array([g.targets for g in gs], dtype=np.int64)
                if kind in (GateKind.MEASURE_Z, GateKind.MEASURE_X):
                    ops.append((kind, t[:, 0], np.array([mi[g.key] for g in gs], dtype=np.int64)))
                elif kind is GateKind.IDLE:
                    continue
                else:
                    ops.append((kind, t))
            self.ops.append(ops)
        sites = noisy.sites
        self.site_layer = np.array([s.layer for s in sites], dtype=np.int64)
        self.site_before = np.array([s.before for s in sites], dtype=bool)
        self.site_kind = np.array([s.kind for s in sites], dtype=np.int64)
        self.site_q = np.array([(s.qubits + (-1,))[:2] for s in sites], dtype=np.int64).reshape(-1, 2)
        self.site_prob = np.array([s.prob for s in sites], dtype=float)
        dets = c.detector_records()
        self.det_flat = np.array([i for d in dets for i in d], dtype=np.int64)
        self.det_starts = np.cumsum([0] + [len(d) for d in dets[:-1]]).astype(np.int64)
        self.num_detectors = len(dets)
        obs = c.observable_records()
        self.obs_flat = np.array([i for o in obs for i in o], dtype=np.int64)
        self.obs_starts = np.cumsum([0] + [len(o) for o in obs[:-1]]).astype(np.int64)
        self.num_observables = len(obs)

    # -- fault generation ---------------------------------------------------

    def events(self, site: np.ndarray, shot: np.ndarray, pauli: np.ndarray) -> FaultEvents:
        site = np.asarray(site, dtype=np.int64)
        kind = self.site_kind[site]
        x0, z0, x1, z1 = _pauli_bits(kind, np.asarray(pauli, dtype=np.int64))
        two = self.site_q[site, 1] >= 0
        k0 = x0 | z0
        k1 = two & (x1 | z1)
        layer = np.concatenate([self.site_layer[site][k0], self.site_layer[site][k1]])
        before = np.concatenate([self.site_before[site][k0], self.site_before[site][k1]])
        qubit = np.concatenate([self.site_q[site, 0][k0], self.site_q[site, 1][k1]])
        shots = np.concatenate([shot[k0], shot[k1]])
        return FaultEvents(layer, before, qubit, shots,
                           np.concatenate([x0[k0], x1[k1]]), np.concatenate([z0[k0], z1[k1]]))

    def sample_faults(self, shots: int, rng: np.random.Generator) -> FaultEvents:
        """Independent faults per site and shot, drawn as a Bernoulli process."""
        sites, shot_ids, paulis = [], [], []
        keys = np.stack([self.site_prob, self.site_kind.astype(float)], axis=1)
        groups, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for gi, (p, kind) in enumerate(groups):
            if p <= 0:
                continue
            members = np.nonzero(inverse == gi)[0]
            n = members.size * shots
            pos = _bernoulli_positions(n, p, rng)
            sites.append(members[pos // shots])
            shot_ids.append(pos % shots)
            paulis.append(rng.integers(1, N_OPTIONS[int(kind)] + 1, size=pos.size))
        if not sites:
            return FaultEvents.empty()
        return self.events(np.concatenate(sites), np.concatenate(shot_ids), np.concatenate(paulis))

    # -- engine ---------------------------------------------------------------

    def run(self, events: FaultEvents, shots: int, *, rng: np.random.Generator | None = None,
            observe: Iterable[int] = ()) -> tuple[np.ndarray, dict[int, tuple[np.ndarray, np.ndarray]]]:
        """Propagate ``events``; returns packed measurement flips and observed frames.

        ``observe`` holds layer indices after which copies of (X, Z) are kept.
        With ``rng`` the Z frame is randomised after every Z reset, which turns
        any non-deterministic detector into a visibly random one.
        """
        words = (shots + 63) // 64
        X = np.zeros((self.num_qubits, words), dtype=np.uint64)
        Z = np.zeros_like(X)
        rec = np.zeros((self.num_measurements, words), dtype=np.uint64)
        observe = set(observe)
        snaps = {}
        order = np.lexsort((~events.before, events.layer))
        key = events.layer[order] * 2 + (~events.before[order]).astype(np.int64)
        q = events.qubit[order]
        w = events.shot[order] >> 6
        bit = ONE << (events.shot[order] & 63).astype(np.uint64)
        xs, zs = events.x[order], events.z[order]
        bounds = np.searchsorted(key, np.arange(2 * len(self.ops) + 1))

        def kick(lo, hi):
            if lo == hi:
                return
            sx = slice(lo, hi)
            m = xs[sx]
            np.bitwise_xor.at(X, (q[sx][m], w[sx][m]), bit[sx][m])
            m = zs[sx]
            np.bitwise_xor.at(Z, (q[sx][m], w[sx][m]), bit[sx][m])

        for i, ops in enumerate(self.ops):
            kick(bounds[2 * i], bounds[2 * i + 1])
            for op in ops:
                kind = op[0]
                if kind is GateKind.CNOT:
                    c, t = op[1][:, 0], op[1][:, 1]
                    X[t] ^= X[c]
                    Z[c] ^= Z[t]
                elif kind is GateKind.HADAMARD:
                    t = op[1][:, 0]
                    X[t], Z[t] = Z[t], X[t].copy()
                elif kind is GateKind.SWAP:
                    a, b = op[1][:, 0], op[1][:, 1]
                    X[a], X[b] = X[b], X[a].copy()
                    Z[a], Z[b] = Z[b], Z[a].copy()
                elif kind in (GateKind.PREP_Z, GateKind.PREP_X):
                    t = op[1][:, 0]
                    X[t] = 0
                    Z[t] = 0
                    if rng is not None:
                        Z[t] = rng.integers(0, 2 ** 64, size=(t.size, words), dtype=np.uint64)
                elif kind is GateKind.MEASURE_Z:
                    rec[op[2]] = X[op[1]]
                    if rng is not None:
                        Z[op[1]] = rng.integers(0, 2 ** 64, size=(op[1].size, words), dtype=np.uint64)
                elif kind is GateKind.MEASURE_X:
                    rec[op[2]] = Z[op[1]]
            kick(bounds[2 * i + 1], bounds[2 * i + 2])
            if i in observe:
                snaps[i] = (X.copy(), Z.copy())
        return rec, snaps

    def detectors(self, rec: np.ndarray) -> np.ndarray:
        if self.num_detectors == 0:
            return np.zeros((0, rec.shape[1]), dtype=np.uint64)
        return np.bitwise_xor.reduceat(rec[self.det_flat], self.det_starts, axis=0)

    def observables(self, rec: np.ndarray) -> np.ndarray:
        if self.num_observables == 0:
            return np.zeros((0, rec.shape[1]), dtype=np.uint64)
        return np.bitwise_xor.reduceat(rec[self.obs_flat], self.obs_starts, axis=0)


def _bernoulli_positions(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices in [0, n) each included independently with probability p."""
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    mean = n * p
    chunk = int(mean + 6 * np.sqrt(mean) + 16)
    parts, last = [], -1
    while True:
        gaps = rng.geometric(p, size=chunk)
        pos = last + np.cumsum(gaps)
        parts.append(pos)
        last = int(pos[-1])
        if last >= n:
            break
    pos = np.concatenate(parts)
    return pos[pos < n].astype(np.int64)


def unpack(packed: np.ndarray, shots: int) -> np.ndarray:
    """(rows, words) uint64 -> (shots, rows) bool."""
    b = np.unpackbits(packed.view(np.uint8).reshape(packed.shape[0], -1), axis=1, bitorder="little")
    return b[:, :shots].T.astype(bool)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleBatch:
    detectors: np.ndarray  # (shots, num_detectors) bool
    observables: np.ndarray  # (shots, num_observables) bool


def sample(noisy: NoisyCircuit | CompiledCircuit, shots: int, seed: int, *,
           batch_size: int = 1 << 16) -> SampleBatch:
    return concat_batches(list(iter_samples(noisy, shots, seed, batch_size=batch_size)))


def iter_samples(noisy: NoisyCircuit | CompiledCircuit, shots: int, seed: int, *,
                 batch_size: int = 1 << 16) -> Iterator[SampleBatch]:
    """Shots in fixed-size batches; batch ``i`` uses its own stream spawned from ``seed``.

    Output depends only on (circuit, shots, seed, batch_size).
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    cc = noisy if isinstance(noisy, CompiledCircuit) else CompiledCircuit(noisy)
    n_batches = (shots + batch_size - 1) // batch_size
    streams = np.random.SeedSequence(seed).spawn(n_batches)
    for i, ss in enumerate(streams):
        n = min(batch_size, shots - i * batch_size)
        rng = np.random.Generator(np.random.Philox(ss))
        ev = cc.sample_faults(n, rng)
        rec, _ = cc.run(ev, n, rng=rng)
        yield SampleBatch(unpack(cc.detectors(rec), n), unpack(cc.observables(rec), n))


def concat_batches(batches: Sequence[SampleBatch]) -> SampleBatch:
    return SampleBatch(np.concatenate([b.detectors for b in batches]),
                       np.concatenate([b.observables for b in batches]))


# ---------------------------------------------------------------------------
# exhaustive single faults


@dataclass
class SingleFaultTable:
    site: np.ndarray  # (F,)
    pauli: np.ndarray  # (F,)
    prob: np.ndarray  # (F,) probability of this particular fault
    detectors: np.ndarray  # (F, num_detectors) bool
    observables: np.ndarray  # (F, num_observables) bool
    frames: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def enumerate_single_faults(noisy: NoisyCircuit, roles: Iterable[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Every (site, Pauli) pair of the noise model, optionally restricted to gate roles."""
    keep = None if roles is None else set(roles)
    sites, paulis = [], []
    for i, s in enumerate(noisy.sites):
        if keep is not None and s.role not in keep:
            continue
        k = N_OPTIONS[s.kind]
        sites.extend([i] * k)
        paulis.extend(range(1, k + 1))
    return np.array(sites, dtype=np.int64), np.array(paulis, dtype=np.int64)


def sweep_single_faults(noisy: NoisyCircuit, roles: Iterable[str] | None = None, *,
                        ideal_tags: Iterable[str] = (), observe: Iterable[int] = ()) -> SingleFaultTable:
    cc = CompiledCircuit(noisy, ideal_tags=ideal_tags)
    site, pauli = enumerate_single_faults(noisy, roles)
    ev = cc.events(site, np.arange(site.size, dtype=np.int64), pauli)
    n = max(site.size, 1)
    rec, snaps = cc.run(ev, n, observe=observe)
    prob = cc.site_prob[site] / np.array([N_OPTIONS[k] for k in cc.site_kind[site]]) if site.size else np.zeros(0)
    return SingleFaultTable(site, pauli, prob, unpack(cc.detectors(rec), n)[:site.size],
                            unpack(cc.observables(rec), n)[:site.size], snaps)


# ---------------------------------------------------------------------------
# wire bookkeeping


def wire_contents(circuit: LayeredCircuit, initial: Mapping[int, int]) -> list[dict[int, int] | None]:
    """Wire -> abstract qubit after each layer, or None while a swap is half done.

    Entry ``i`` describes the boundary after layer ``i``.  A swap is applied
    once all gates carrying its key have been seen (three CNOTs when
    decomposed, one native SWAP otherwise).
    """
    total = Counter(g.key for _, _, g in circuit.gates if g.tag in SWAP_ROLES)
    seen: Counter = Counter()
    contents = {w: q for q, w in initial.items()}
    out: list[dict[int, int] | None] = []
    for layer in circuit.layers:
        for g in layer:
            if g.tag in SWAP_ROLES:
                seen[g.key] += 1
                if seen[g.key] == total[g.key]:
                    a, b = g.targets
                    qa, qb = contents.pop(a, None), contents.pop(b, None)
                    if qa is not None:
                        contents[b] = qa
                    if qb is not None:
                        contents[a] = qb
        pending = any(0 < seen[k] < total[k] for k in seen)
        out.append(None if pending else dict(contents))
    return out


def inject(noisy: NoisyCircuit, path: FaultPath, *, initial: Mapping[int, int] | None = None,
           after_layer: int | None = None) -> tuple[ErrorPattern, np.ndarray]:
    """Deterministically propagate ``path``.

    Returns the residual Pauli on abstract qubits after ``after_layer``
    (default: the last layer; routing wires are ignored) and the detector
    outcomes.
    """
    for s, p in path.faults:
        if not 0 <= s < len(noisy.sites):
            raise ValueError(f"no noise site {s}")
        if not 1 <= p <= N_OPTIONS[noisy.sites[s].kind]:
            raise ValueError(f"Pauli {p} not available at site {s}")
    cc = CompiledCircuit(noisy)
    site = np.array([s for s, _ in path.faults], dtype=np.int64)
    pauli = np.array([p for _, p in path.faults], dtype=np.int64)
    layer = len(noisy.circuit.layers) - 1 if after_layer is None else after_layer
    rec, snaps = cc.run(cc.events(site, np.zeros(site.size, dtype=np.int64), pauli), 1, observe=[layer])
    if initial is None:
        initial = {q: q for q in range(noisy.circuit.num_qubits)}
    contents = wire_contents(noisy.circuit, initial)[layer]
    if contents is None:
        raise ValueError("time slice falls inside a swap")
    X, Z = snaps[layer]
    pauli_map = {}
    for wire, q in contents.items():
        x, z = bool(X[wire, 0] & ONE), bool(Z[wire, 0] & ONE)
        if x or z:
            pauli_map[q] = "Y" if x and z else "X" if x else "Z"
    return ErrorPattern(pauli_map, path.weight), unpack(cc.detectors(rec), 1)[0]


# ---------------------------------------------------------------------------
# swap-fault spreading bound


@dataclass
class SpreadReport:
    n_single: int
    n_pairs: int
    n_slices: int
    violations: list[tuple[int, int, int]]  # (fault i, fault j or -1, boundary layer)
    max_weight: int


@numba.njit(cache=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - np.uint64(1)
        c += 1
    return c


@numba.njit(cache=True)
def _spread_kernel(xs, zs, slice_layer, f_layer, f_type1, f_inst, f_t2mask, max_report):
    F, S = xs.shape
    out = np.full((max_report, 3), -1, dtype=np.int64)
    n_bad = 0
    worst = 0
    for i in range(F):
        for s in range(S):
            if f_layer[i] > slice_layer[s]:
                continue
            sup = xs[i, s] | zs[i, s]
            w = _popcount(sup)
            if w > worst:
                worst = w
            ell = 1 if f_type1[i] else 0
            if _popcount(sup & ~f_t2mask[i]) > ell:
                if n_bad < max_report:
                    out[n_bad, 0] = i
                    out[n_bad, 2] = slice_layer[s]
                n_bad += 1
        for j in range(i + 1, F):
            for s in range(S):
                li = f_layer[i] <= slice_layer[s]
                lj = f_layer[j] <= slice_layer[s]
                if not (li or lj):
                    continue
                sup = (xs[i, s] ^ xs[j, s]) | (zs[i, s] ^ zs[j, s])
                w = _popcount(sup)
                if w > worst:
                    worst = w
                ell = 0
                t2 = np.uint64(0)
                if li:
                    ell += f_type1[i]
                    t2 |= f_t2mask[i]
                if lj:
                    t2 |= f_t2mask[j]
                    if f_type1[j] and not (li and f_type1[i] and f_inst[i] == f_inst[j]):
                        ell += 1
                if _popcount(sup & ~t2) > ell:
                    if n_bad < max_report:
                        out[n_bad, 0] = i
                        out[n_bad, 1] = j
                        out[n_bad, 2] = slice_layer[s]
                    n_bad += 1
    return n_bad, out, worst


def swap_spread_check(noisy: NoisyCircuit, initial: Mapping[int, int], patch_qubits: int, *,
                      max_report: int = 20) -> SpreadReport:
    """Exhaustive spreading check for fault paths of weight 1 and 2 on swap locations.

    Computational CNOTs are made ideal identities, so the abstract circuit
    itself spreads nothing (k = 0).  At every clean time slice the support of
    the pattern on abstract qubits, minus the qubits of operations whose
    type-2 swaps are faulty, must not exceed the number of distinct faulty
    type-1 swaps so far.  Fault pairs on the same site are excluded (that is
    weight 1).
    """
    from .embedder import swap_op

    if patch_qubits > 64:
        raise ValueError("bit-packed check supports at most 64 abstract qubits")
    circuit = noisy.circuit
    contents = wire_contents(circuit, initial)
    clean = [i for i, c in enumerate(contents) if c is not None]
    tab = sweep_single_faults(noisy, roles=SWAP_ROLES, ideal_tags=(COMPUTATIONAL,), observe=clean)
    F = tab.site.size
    xs = np.zeros((F, len(clean)), dtype=np.uint64)
    zs = np.zeros_like(xs)
    for s, layer in enumerate(clean):
        X, Z = tab.frames[layer]
        Xb = unpack(X, max(F, 1))[:F]
        Zb = unpack(Z, max(F, 1))[:F]
        for wire, q in contents[layer].items():
            xs[:, s] |= Xb[:, wire].astype(np.uint64) << np.uint64(q)
            zs[:, s] |= Zb[:, wire].astype(np.uint64) << np.uint64(q)
    f_layer = np.array([noisy.sites[i].layer for i in tab.site], dtype=np.int64)
    f_type1 = np.array([noisy.sites[i].role == SWAP_TYPE1 for i in tab.site], dtype=np.int64)
    keys = [circuit.layers[noisy.sites[i].layer][noisy.sites[i].index].key for i in tab.site]
    inst_ids = {k: n for n, k in enumerate(dict.fromkeys(keys))}
    f_inst = np.array([inst_ids[k] for k in keys], dtype=np.int64)
    f_t2 = np.zeros(F, dtype=np.uint64)
    for n, i in enumerate(tab.site):
        if noisy.sites[i].role == SWAP_TYPE2:
            a, q = map(int, swap_op(keys[n]).split("-"))
            f_t2[n] = (ONE << np.uint64(a)) | (ONE << np.uint64(q))
    n_bad, out, worst = _spread_kernel(xs, zs, np.array(clean, dtype=np.int64), f_layer, f_type1,
                                      f_inst, f_t2, max_report)
    bad = [tuple(int(v) for v in row) for row in out[:min(n_bad, max_report)]]
    if n_bad > max_report:
        bad.append((-1, -1, -1))
    return SpreadReport(F, F * (F - 1) // 2, len(clean), bad if n_bad else [], int(worst))


# ---------------------------------------------------------------------------
# witness search for physical fault paths


@dataclass
class WitnessReport:
    max_weight: int
    checked: dict[int, int]
    counterexamples: list[tuple]

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def _signatures(noisy: NoisyCircuit, patch, basis: str, salt: np.ndarray | None = None):
    """Linear 64-bit hash of (detectors, observables, residual data class) per single fault."""
    tab = sweep_single_faults(noisy, observe=[len(noisy.circuit.layers) - 1])
    F = tab.site.size
    X, Z = tab.frames[len(noisy.circuit.layers) - 1]
    Xb, Zb = unpack(X, max(F, 1))[:F], unpack(Z, max(F, 1))[:F]
    wire = {}
    for _, _, g in noisy.circuit.gates:
        if g.key and g.key.startswith("d"):
            wire[int(g.key[1:])] = g.targets[0]
    data = patch.data_qubits
    dx = Xb[:, [wire[q] for q in data]]
    dz = Zb[:, [wire[q] for q in data]]
    if basis == "X":  # undo the readout Hadamards
        dx, dz = dz, dx
    col = {q: i for i, q in enumerate(data)}
    cls = []
    for a in patch.ancillas_of("Z"):
        cls.append(np.bitwise_xor.reduce(dx[:, [col[q] for q in patch.support(a)]], axis=1))
    for a in patch.ancillas_of("X"):
        cls.append(np.bitwise_xor.reduce(dz[:, [col[q] for q in patch.support(a)]], axis=1))
    cls.append(np.bitwise_xor.reduce(dx[:, [col[q] for q in patch.logical("Z")]], axis=1))
    cls.append(np.bitwise_xor.reduce(dz[:, [col[q] for q in patch.logical("X")]], axis=1))
    bits = np.concatenate([tab.detectors, tab.observables, np.stack(cls, axis=1)], axis=1)
    if salt is None or salt.size != bits.shape[1]:
        salt = np.random.default_rng(12345).integers(0, 2 ** 64, size=bits.shape[1], dtype=np.uint64)
    h = np.zeros(F, dtype=np.uint64)
    for k in range(bits.shape[1]):
        h[bits[:, k]] ^= salt[k]
    return tab, h, salt


@numba.njit(cache=True)
def _pairs_missing(h, site, allowed_sorted, max_report):
    F = h.size
    out = np.full((max_report, 2), -1, dtype=np.int64)
    n = 0
    for i in range(F):
        for j in range(i + 1, F):
            if site[i] == site[j]:
                continue
            v = h[i] ^ h[j]
            k = np.searchsorted(allowed_sorted, v)
            if k < allowed_sorted.size and allowed_sorted[k] == v:
                continue
            if n < max_report:
                out[n, 0] = i
                out[n, 1] = j
            n += 1
    return n, out


@numba.njit(cache=True)
def _pair_hashes(h, site):
    F = h.size
    out = np.empty(F * (F - 1) // 2, dtype=np.uint64)
    n = 0
    for i in range(F):
        for j in range(i + 1, F):
            if site[i] != site[j]:
                out[n] = h[i] ^ h[j]
                n += 1
    return out[:n]


def epp_witness_search(abstract: NoisyCircuit, physical: NoisyCircuit, patch, max_weight: int = 2, *,
                       basis: str = "Z", max_report: int = 20) -> WitnessReport:
    """For each physical fault path of weight <= max_weight, look for an abstract
    path of no larger weight giving the same detectors, observable and
    residual data Pauli modulo stabilizers.

    Matching uses a GF(2)-linear 64-bit hash of that signature, so pairs are
    handled by XOR; a spurious match needs a 64-bit collision.
    """
    if max_weight not in (1, 2):
        raise ValueError("max_weight must be 1 or 2")
    atab, ah, salt = _signatures(abstract, patch, basis)
    ptab, ph, _ = _signatures(physical, patch, basis, salt)
    allowed = [np.zeros(1, dtype=np.uint64), ah]
    singles = np.unique(np.concatenate(allowed))
    bad: list[tuple] = []
    miss = ~np.isin(ph, singles)
    for i in np.nonzero(miss)[0][:max_report]:
        bad.append((int(ptab.site[i]), int(ptab.pauli[i])))
    checked = {1: int(ph.size)}
    if max_weight == 2:
        allowed2 = np.unique(np.concatenate([singles, _pair_hashes(ah, atab.site)]))
        n, out = _pairs_missing(ph, ptab.site, allowed2, max_report)
        checked[2] = int(ph.size * (ph.size - 1) // 2)
        for i, j in out[:min(n, max_report)]:
            bad.append(((int(ptab.site[i]), int(ptab.pauli[i])), (int(ptab.site[j]), int(ptab.pauli[j]))))
    return WitnessReport(max_weight, checked, bad)


# ---------------------------------------------------------------------------
# detector stream


MAGIC = b"EPPDET1\n"


def write_detector_stream(fh: io.BufferedIOBase, batch: SampleBatch) -> None:
    """Header: magic, then little-endian uint32 shots, detectors, observables.
    Each shot is one row of bits (detectors then observables), bit-packed
    little-endian and padded to a whole byte."""
    shots, nd = batch.detectors.shape
    no = batch.observables.shape[1]
    fh.write(MAGIC)
    fh.write(struct.pack("<III", shots, nd, no))
    rows = np.concatenate([batch.detectors, batch.observables], axis=1)
    fh.write(np.packbits(rows, axis=1, bitorder="little").tobytes())


def read_detector_stream(fh: io.BufferedIOBase) -> SampleBatch:
    if fh.read(len(MAGIC)) != MAGIC:
        raise ValueError("not a detector stream")
    shots, nd, no = struct.unpack("<III", fh.read(12))
    width = (nd + no + 7) // 8
    raw = np.frombuffer(fh.read(shots * width), dtype=np.uint8).reshape(shots, width)
    rows = np.unpackbits(raw, axis=1, bitorder="little")[:, :nd + no].astype(bool)
    return SampleBatch(rows[:, :nd], rows[:, nd:])
