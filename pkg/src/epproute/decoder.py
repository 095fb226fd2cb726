"""Matching graph construction and exact minimum-weight perfect matching.

The graph is built from an exhaustive single-fault sweep of the circuit that
will be sampled:

1. faults on computational locations (gates, preps, measurements) give the
   ordinary surface-code graph;
2. faults inside swaps must land on edges that already exist, and only
   raise their probabilities;
3. a routing qubit that takes part in several type-1 swaps can carry one
   fault's junk into another swap.  Every set of ``2 <= s <= t`` such swaps
   is a correlated mechanism whose joint probability is added in full to
   each constituent edge.

Decoding pairs up fired detectors exactly: a bitmask DP for small defect
counts (numba), a blossom matching (networkx) for the rest.
"""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx
import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .circuit import SWAP_TYPE1, LayeredCircuit
from .noise import NoisyCircuit, SWAP_ROLES
from .sim import SingleFaultTable, sweep_single_faults
from .topology import Species, SurfacePatch

BOUNDARY = -1
DP_LIMIT = 16


class GraphConstructionError(ValueError):
    pass


def combine(q1: float, q2: float) -> float:
    """Probability that exactly one of two independent flips happens."""
    return q1 + q2 - 2 * q1 * q2


def edge_weight(q: float) -> float:
    q = min(max(q, 1e-300), 0.5 - 1e-15)
    return math.log((1 - q) / q)


@dataclass
class CorrelatedMechanism:
    routing_qubit: int
    touched_locations: list[tuple[int, int]]  # edges
    joint_prob: float


@dataclass
class MatchingGraph:
    """Detectors of one basis class; node ``-1`` is the boundary."""

    nodes: list[int]  # global detector ids
    edges: dict[tuple[int, int], dict] = field(default_factory=dict)  # (u, v) local ids, u < v or v = -1
    mechanisms: list[CorrelatedMechanism] = field(default_factory=list)
    mask_conflicts: int = 0

    @staticmethod
    def key(u: int, v: int) -> tuple[int, int]:
        if u == BOUNDARY or v == BOUNDARY:
            return (max(u, v), BOUNDARY)
        return (min(u, v), max(u, v))

    def add(self, u: int, v: int, q: float, mask: bool) -> None:
        k = self.key(u, v)
        e = self.edges.get(k)
        if e is None:
            self.edges[k] = {"q": q, "mask": mask, "mass": {mask: q}}
            return
        e["q"] = combine(e["q"], q)
        e["mass"][mask] = e["mass"].get(mask, 0.0) + q
        if e["mask"] != mask:
            self.mask_conflicts += 1
            e["mask"] = max(e["mass"], key=e["mass"].get)

    def bump(self, k: tuple[int, int], q: float) -> None:
        e = self.edges[k]
        e["q"] = combine(e["q"], q)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def weight(self, k) -> float:
        return edge_weight(self.edges[k]["q"])

    def to_json(self) -> str:
        return json.dumps({
            "nodes": self.nodes,
            "edges": [{"u": u, "v": v, "weight": self.weight((u, v)), "error_prob": e["q"],
                       "observable_mask": int(e["mask"])} for (u, v), e in sorted(self.edges.items())],
            "mechanisms": [{"routing_qubit": m.routing_qubit, "edges": [list(e) for e in m.touched_locations],
                            "joint_prob": m.joint_prob} for m in self.mechanisms],
        })

    @classmethod
    def from_json(cls, text: str) -> "MatchingGraph":
        d = json.loads(text)
        g = cls(list(d["nodes"]))
        for e in d["edges"]:
            g.edges[(e["u"], e["v"])] = {"q": e["error_prob"], "mask": bool(e["observable_mask"]),
                                         "mass": {bool(e["observable_mask"]): e["error_prob"]}}
        g.mechanisms = [CorrelatedMechanism(m["routing_qubit"], [tuple(e) for e in m["edges"]], m["joint_prob"])
                        for m in d.get("mechanisms", [])]
        return g

    def same_connectivity(self, other: "MatchingGraph") -> bool:
        return self.nodes == other.nodes and set(self.edges) == set(other.edges)


def detector_class(circuit: LayeredCircuit, patch: SurfacePatch, basis: str) -> list[int]:
    """Global ids of detectors built on ``basis``-type ancillas."""
    want = Species.Z_ANCILLA if basis == "Z" else Species.X_ANCILLA
    out = []
    for i, det in enumerate(circuit.detectors):
        a = int(det[0][1:].split(".")[0])
        if patch.species[a] is want:
            out.append(i)
    return out


def _fault_edge(fired: np.ndarray, local: dict[int, int]) -> tuple[int, int] | None:
    ids = [local[d] for d in np.nonzero(fired)[0] if d in local]
    if not ids:
        return None
    if len(ids) == 1:
        return (ids[0], BOUNDARY)
    if len(ids) == 2:
        return MatchingGraph.key(ids[0], ids[1])
    raise GraphConstructionError(f"single fault fires {len(ids)} detectors of one class")


def build_matching_graph(noisy: NoisyCircuit, patch: SurfacePatch, *, basis: str = "Z",
                         initial: Mapping[int, int] | None = None,
                         table: SingleFaultTable | None = None) -> MatchingGraph:
    """Matching graph for the ``basis`` detector class of ``noisy``.

    ``initial`` is the abstract->wire mapping at the start (identity when
    omitted); it is only needed to follow routing qubits for step 3.
    """
    circuit = noisy.circuit
    cls = detector_class(circuit, patch, basis)
    local = {d: i for i, d in enumerate(cls)}
    g = MatchingGraph(cls)
    tab = table or sweep_single_faults(noisy)
    roles = np.array([noisy.sites[s].role for s in tab.site])
    obs = tab.observables[:, 0] if tab.observables.shape[1] else np.zeros(tab.site.size, dtype=bool)
    edge_of: list[tuple[int, int] | None] = [None] * tab.site.size
    undetected = []
    # step 1
    for i in np.nonzero(~np.isin(roles, SWAP_ROLES))[0]:
        e = _fault_edge(tab.detectors[i], local)
        edge_of[i] = e
        if e is None:
            if obs[i]:
                undetected.append(i)
            continue
        g.add(*e, float(tab.prob[i]), bool(obs[i]))
    # step 2
    for i in np.nonzero(np.isin(roles, SWAP_ROLES))[0]:
        e = _fault_edge(tab.detectors[i], local)
        edge_of[i] = e
        if e is None:
            continue
        if e not in g.edges:
            raise GraphConstructionError(f"swap fault at site {tab.site[i]} creates new edge {e}")
        g.bump(e, float(tab.prob[i]))
        if g.edges[e]["mask"] != bool(obs[i]):
            g.mask_conflicts += 1
    if undetected:
        raise GraphConstructionError(f"{len(undetected)} single faults flip the observable undetected")
    # step 3
    t = patch.d // 2
    if t >= 2:
        for m in correlated_mechanisms(noisy, tab, edge_of, initial, basis, t):
            g.mechanisms.append(m)
            for e in m.touched_locations:
                g.bump(e, m.joint_prob)
    return g


def correlated_mechanisms(noisy: NoisyCircuit, tab: SingleFaultTable, edge_of, initial, basis: str,
                          t: int) -> list[CorrelatedMechanism]:
    """Sets of 2..t type-1 swaps that share one routing qubit."""
    circuit = noisy.circuit
    if initial is None:
        initial = {q: q for q in range(circuit.num_qubits)}
    # follow routing qubits (wires not holding abstract qubits) through the swaps
    total = Counter(g.key for _, _, g in circuit.gates if g.tag in SWAP_ROLES)
    seen: Counter = Counter()
    holder = {w: ("abs", q) for q, w in initial.items()}
    for w in range(circuit.num_qubits):
        holder.setdefault(w, ("junk", w))
    site_of = {(s.layer, s.index): n for n, s in enumerate(noisy.sites)}
    sites_of_key: dict[str, list[int]] = defaultdict(list)
    for n, s in enumerate(noisy.sites):
        g = circuit.layers[s.layer][s.index]
        if g.tag in SWAP_ROLES:
            sites_of_key[g.key].append(n)
    rows_by_site: dict[int, list[int]] = defaultdict(list)
    for r, s in enumerate(tab.site):
        rows_by_site[int(s)].append(r)
    visits: dict[int, list[tuple[str, tuple[int, int], float]]] = defaultdict(list)
    for i, layer in enumerate(circuit.layers):
        for j, g in enumerate(layer):
            if g.tag not in SWAP_ROLES:
                continue
            seen[g.key] += 1
            if seen[g.key] != total[g.key]:
                continue
            a, b = g.targets
            ha, hb = holder[a], holder[b]
            holder[a], holder[b] = hb, ha
            if g.tag != SWAP_TYPE1:
                continue
            junk = ha if ha[0] == "junk" else hb
            comp_wire = a if hb[0] == "abs" else b  # wire holding the abstract qubit after the swap
            # single-qubit mechanism: the flip this swap leaves on its computational qubit
            site = site_of[(i, j)]
            pauli = 1 if basis == "Z" else 2
            pauli = pauli if g.targets[0] == comp_wire else pauli << 2
            row = next(r for r in rows_by_site[site] if tab.pauli[r] == pauli)
            e = edge_of[row]
            if e is None:
                continue
            rows = [r for k in sites_of_key[g.key] for r in rows_by_site[k]]
            q = float(sum(tab.prob[r] for r in rows if edge_of[r] == e))
            visits[junk[1]].append((g.key, e, q))
    out = []
    for junk, vs in visits.items():
        for s in range(2, t + 1):
            for combo in itertools.combinations(vs, s):
                out.append(CorrelatedMechanism(junk, [e for _, e, _ in combo], math.prod(q for _, _, q in combo)))
    return out


# ---------------------------------------------------------------------------
# decoding


@dataclass
class DecoderTables:
    dist: np.ndarray  # (n + 1, n + 1); index n is the boundary
    parity: np.ndarray  # (n + 1, n + 1) uint8 observable parity of the shortest path


def shortest_paths(g: MatchingGraph) -> DecoderTables:
    n = g.num_nodes
    rows, cols, w, m = [], [], [], {}
    for (u, v), e in g.edges.items():
        uu, vv = u, (n if v == BOUNDARY else v)
        wt = g.weight((u, v))
        rows += [uu, vv]
        cols += [vv, uu]
        w += [wt, wt]
        m[(uu, vv)] = m[(vv, uu)] = int(e["mask"])
    # zero-weight edges would vanish from a sparse matrix
    eps = 1e-300
    mat = csr_matrix((np.maximum(np.array(w), eps), (rows, cols)), shape=(n + 1, n + 1))
    dist, pred = shortest_path(mat, method="D", directed=False, return_predecessors=True)
    parity = np.zeros((n + 1, n + 1), dtype=np.uint8)
    for s in range(n + 1):
        for v in np.argsort(dist[s]):
            p = pred[s, v]
            if p >= 0:
                parity[s, v] = parity[s, p] ^ m[(p, v)]
    dist[~np.isfinite(dist)] = 1e300
    return DecoderTables(dist, parity)


@numba.njit(cache=True)
def _dp_match(defects, dist, parity, bnd):
    """Exact minimum matching of ``defects`` where each may also go to the boundary."""
    k = defects.size
    size = 1 << k
    cost = np.full(size, np.inf)
    par = np.zeros(size, dtype=np.uint8)
    cost[0] = 0.0
    for mask in range(1, size):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask ^ (1 << i)
        di = defects[i]
        best = cost[rest] + dist[di, bnd]
        bp = par[rest] ^ parity[di, bnd]
        r = rest
        while r:
            j = 0
            while not (r >> j) & 1:
                j += 1
            r ^= 1 << j
            c = cost[rest ^ (1 << j)] + dist[di, defects[j]]
            if c < best:
                best = c
                bp = par[rest ^ (1 << j)] ^ parity[di, defects[j]]
        cost[mask] = best
        par[mask] = bp
    return cost[size - 1], par[size - 1]


@numba.njit(cache=True)
def _dp_batch(indptr, indices, dist, parity, bnd, limit, out_cost, out_par, out_done):
    for s in range(indptr.size - 1):
        d = indices[indptr[s]:indptr[s + 1]]
        if d.size > limit:
            out_done[s] = False
            continue
        c, p = _dp_match(d, dist, parity, bnd)
        out_cost[s] = c
        out_par[s] = p
        out_done[s] = True


def blossom_match(defects: Sequence[int], tables: DecoderTables) -> tuple[float, int]:
    """Exact matching through networkx's blossom algorithm (boundary copies per defect)."""
    k = len(defects)
    if k == 0:
        return 0.0, 0
    bnd = tables.dist.shape[0] - 1
    D = tables.dist
    scale = 1e6
    G = nx.Graph()
    for i in range(k):
        G.add_edge(i, k + i, weight=-round(D[defects[i], bnd] * scale))
        for j in range(i + 1, k):
            G.add_edge(i, j, weight=-round(D[defects[i], defects[j]] * scale))
            G.add_edge(k + i, k + j, weight=0)
    matching = nx.max_weight_matching(G, maxcardinality=True)
    cost, par = 0.0, 0
    for a, b in matching:
        a, b = min(a, b), max(a, b)
        if a >= k:
            continue
        if b >= k:
            cost += D[defects[a], bnd]
            par ^= int(tables.parity[defects[a], bnd])
        else:
            cost += D[defects[a], defects[b]]
            par ^= int(tables.parity[defects[a], defects[b]])
    return cost, par


class Decoder:
    def __init__(self, graph: MatchingGraph, *, dp_limit: int = DP_LIMIT):
        self.graph = graph
        self.tables = shortest_paths(graph)
        self.dp_limit = dp_limit
        self.boundary = graph.num_nodes

    def match(self, defects: Sequence[int], method: str = "auto") -> tuple[float, int]:
        """(matching weight, observable parity) for local defect ids."""
        d = np.asarray(sorted(defects), dtype=np.int64)
        if method == "blossom" or (method == "auto" and d.size > self.dp_limit):
            return blossom_match(d, self.tables)
        c, p = _dp_match(d, self.tables.dist, self.tables.parity, self.boundary)
        return float(c), int(p)

    def decode(self, syndrome: np.ndarray) -> bool:
        """Predicted observable flip for a boolean syndrome over the class nodes."""
        return bool(self.match(np.nonzero(syndrome)[0])[1])

    def decode_batch(self, syndromes: np.ndarray) -> np.ndarray:
        """Vectorised over shots; identical syndromes are decoded once."""
        if syndromes.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        packed = np.packbits(syndromes, axis=1)
        fired = packed.any(axis=1)
        out = np.zeros(syndromes.shape[0], dtype=bool)
        if not fired.any():
            return out
        sub = packed[fired]
        view = np.ascontiguousarray(sub).view(np.dtype((np.void, sub.shape[1]))).ravel()
        _, first, inv = np.unique(view, return_index=True, return_inverse=True)
        uniq = syndromes[fired][first]
        counts = uniq.sum(axis=1)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        indices = np.nonzero(uniq)[1].astype(np.int64)
        cost = np.zeros(len(first))
        par = np.zeros(len(first), dtype=np.uint8)
        done = np.zeros(len(first), dtype=bool)
        _dp_batch(indptr, indices, self.tables.dist, self.tables.parity, self.boundary, self.dp_limit,
                  cost, par, done)
        for s in np.nonzero(~done)[0]:
            par[s] = blossom_match(indices[indptr[s]:indptr[s + 1]], self.tables)[1]
        out[fired] = par[inv.reshape(-1)].astype(bool)
        return out


def brute_force_min_weight(defects: Sequence[int], tables: DecoderTables) -> float:
    """Reference minimum by memoised recursion over defect subsets."""
    bnd = tables.dist.shape[0] - 1
    D = tables.dist.tolist()
    ds = list(defects)
    memo: dict[int, float] = {0: 0.0}

    def best(mask: int) -> float:
        if mask in memo:
            return memo[mask]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        a = ds[i]
        v = best(rest) + D[a][bnd]
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            v = min(v, best(rest & ~(1 << j)) + D[a][ds[j]])
        memo[mask] = v
        return v

    return best((1 << len(ds)) - 1)
