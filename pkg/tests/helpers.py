"""Reference evaluation of a circuit on a single Pauli frame."""

import numpy as np

from epproute.circuit import MEASUREMENTS, LayeredCircuit
from epproute.sim import PauliFrame, measurement_flip, propagate


def run_frame(circuit: LayeredCircuit, kicks: dict[int, list[tuple[int, str]]] | None = None):
    """Propagate X/Z/Y kicks inserted before layer ``i`` (``kicks[i] = [(wire, 'X'), ...]``).

    Returns (measurement flips by key, detector bits, observable bits, final frame).
    """
    kicks = kicks or {}
    f = PauliFrame.empty(circuit.num_qubits)
    flips = {}
    for i, layer in enumerate(circuit.layers):
        for w, p in kicks.get(i, []):
            if p in "XY":
                f.x[w] ^= True
            if p in "ZY":
                f.z[w] ^= True
        for g in layer:
            if g.kind in MEASUREMENTS:
                flips[g.key] = measurement_flip(f, g)
        for g in layer:
            f = propagate(f, g)
    det = np.array([np.bitwise_xor.reduce([flips[k] for k in d]) for d in circuit.detectors], dtype=bool)
    obs = np.array([np.bitwise_xor.reduce([flips[k] for k in o]) for o in circuit.observables], dtype=bool)
    return flips, det, obs, f
