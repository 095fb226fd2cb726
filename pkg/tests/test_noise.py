import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epproute.circuit import COMPUTATIONAL, Gate, GateKind, LayeredCircuit, SurfaceCodeSpec, build_memory_experiment
from epproute.noise import (
    DEP1,
    DEP2,
    FLIP_X,
    EffectiveNoiseParams,
    PauliChannel,
    PauliChannel1,
    apply_noise_model,
    compose_channels,
    effective_cnot_channel,
    exact_effective_cnot_channel,
    marginal_after_type1,
    p_eff_prime,
    pauli_index,
    pauli_label,
)

from conftest import physical

P = 1e-3


def test_pauli_labels_round_trip():
    for i in range(16):
        assert pauli_index(pauli_label(i, 2)) == i
    assert pauli_index("XZ") == 1 | (2 << 2)
    # product up to phase is XOR of indices
    assert pauli_index("X") ^ pauli_index("Z") == pauli_index("Y")


def test_marginal_of_depolarizing():
    m = marginal_after_type1(PauliChannel.depolarizing(P, (0, 1)))
    assert np.allclose(m.probs[1:], 4 * P / 15)
    assert m.error_probability == pytest.approx(4 * P / 5)


def test_marginal_trivial_cases():
    ident = marginal_after_type1(PauliChannel.identity((0, 1)))
    assert ident.probs.tolist() == [1, 0, 0, 0]
    xx = marginal_after_type1(PauliChannel.from_terms((0, 1), {"XX": 0.2}))
    assert xx.prob("X") == pytest.approx(0.2) and xx.error_probability == pytest.approx(0.2)
    with pytest.raises(ValueError):
        marginal_after_type1(PauliChannel.identity((0,)))


def test_two_single_qubit_depolarizing():
    d = PauliChannel.depolarizing(P, (0,))
    c = compose_channels([d, d])
    assert c.error_probability == pytest.approx(2 * P - 4 / 3 * P * P, abs=1e-15)
    assert np.allclose(c.probs[1:], c.probs[1])


def test_compose_with_identity():
    ch = PauliChannel.from_terms((0, 1), {"XI": 0.01, "ZY": 0.02})
    out = compose_channels([ch, PauliChannel.identity((0, 1))])
    assert np.allclose(out.probs, ch.probs)


def _conj_cnot(i: int) -> int:
    """Index of the Pauli C P C for CNOT(control=0, target=1)."""
    x0, z0, x1, z1 = i & 1, (i >> 1) & 1, (i >> 2) & 1, (i >> 3) & 1
    x1 ^= x0
    z0 ^= z1
    return x0 | (z0 << 1) | (x1 << 2) | (z1 << 3)


def _through(ch: PauliChannel, flip: bool) -> PauliChannel:
    v = np.zeros(16)
    for i, p in enumerate(ch.probs):
        j = i
        if flip:  # CNOT(1 -> 0): swap roles of the qubits
            j = ((j & 3) << 2) | (j >> 2)
            j = _conj_cnot(j)
            j = ((j & 3) << 2) | (j >> 2)
        else:
            j = _conj_cnot(j)
        v[j] += p
    return PauliChannel((0, 1), v)


def test_decomposed_swap_is_depolarizing_with_three_p():
    dep = PauliChannel.depolarizing(P, (0, 1))
    # faults after CNOT k propagate through the remaining CNOTs
    f1 = _through(_through(dep, True), False)
    f2 = _through(dep, False)
    total = compose_channels([f1, f2, dep])
    assert total.error_probability == pytest.approx(3 * P, abs=5 * P * P)
    assert np.allclose(total.probs[1:], 3 * P / 15, atol=5 * P * P)


def test_effective_channel_examples():
    plain = effective_cnot_channel(EffectiveNoiseParams(P, 3 * P))
    assert np.allclose(plain.probs, PauliChannel.depolarizing(P, (0, 1)).probs)
    t2 = effective_cnot_channel(EffectiveNoiseParams(P, P, n2=1))
    for a, b in itertools.product("XYZ", repeat=2):
        assert t2.prob(a + b) == pytest.approx(2 * P / 15)
    t1 = effective_cnot_channel(EffectiveNoiseParams(P, 3 * P, n11=1))
    for a in "XYZ":
        assert t1.prob(a + "I") == pytest.approx(13 * P / 15)
        assert t1.prob("I" + a) == pytest.approx(P / 15)


def test_effective_channel_rejects_large_p():
    with pytest.raises(ValueError):
        effective_cnot_channel(EffectiveNoiseParams(0.5, 1.5, n11=2, n12=2, n2=2))


def test_effective_params_validation():
    with pytest.raises(ValueError):
        EffectiveNoiseParams(P, P, n11=-1)
    with pytest.raises(ValueError):
        EffectiveNoiseParams(P, P, n2=1.5)
    with pytest.raises(ValueError):
        EffectiveNoiseParams(P, P, nbar1=-0.1)


@pytest.mark.parametrize("n11,n12,n2", list(itertools.product(range(3), repeat=3)))
def test_linear_channel_error_terms_track_exact_composition(n11, n12, n2):
    prm = EffectiveNoiseParams(P, P, n11, n12, n2)
    lin, ex = effective_cnot_channel(prm), exact_effective_cnot_channel(prm)
    assert np.all(np.abs(lin.probs[1:] - ex.probs[1:]) <= 5 * P * P)


@pytest.mark.parametrize("ratio", [1, 3])
def test_linear_channel_deviation_is_second_order(ratio):
    # deviation / p^2 must settle to a constant as p -> 0
    scaled = []
    for p in (1e-2, 1e-3, 1e-4):
        prm = EffectiveNoiseParams(p, ratio * p, 2, 2, 2)
        dev = np.abs(effective_cnot_channel(prm).probs - exact_effective_cnot_channel(prm).probs)
        scaled.append(dev.max() / p**2)
    assert scaled[2] == pytest.approx(scaled[1], rel=0.05)
    assert scaled[1] < 2 * scaled[0] + 1


def test_p_eff_prime_values():
    p = Fraction(1)
    heavy = EffectiveNoiseParams(p, 3 * p, nbar1=Fraction(35, 40))
    hexa = EffectiveNoiseParams(p, p, nbar2=Fraction(1, 4))
    assert p_eff_prime(heavy) == Fraction(31, 10)
    assert p_eff_prime(hexa) == Fraction(5, 4)
    assert p_eff_prime(EffectiveNoiseParams(p, 3 * p)) == 1
    assert p_eff_prime(EffectiveNoiseParams(P, 3 * P, nbar1=0.875)) == pytest.approx(3.1 * P)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.05), st.floats(0, 0.05), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
def test_channels_are_trace_preserving(p, ps, n11, n12, n2):
    prm = EffectiveNoiseParams(p, ps, n11, n12, n2)
    for ch in (effective_cnot_channel(prm), exact_effective_cnot_channel(prm)):
        assert ch.is_valid()
        assert abs(ch.probs.sum() - 1) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 0.2), min_size=3, max_size=3))
def test_single_qubit_constructor_orders_ixyz(ps):
    px, py, pz = ps
    ch = PauliChannel1([1 - px - py - pz, px, py, pz])
    assert ch.prob("X") == px and ch.prob("Y") == py and ch.prob("Z") == pz
    assert ch.is_valid()


def test_noise_sites():
    c = LayeredCircuit(2, [[Gate(GateKind.PREP_Z, (0,)), Gate(GateKind.PREP_X, (1,))],
                           [Gate(GateKind.CNOT, (1, 0), COMPUTATIONAL, "k")],
                           [Gate(GateKind.SWAP, (0, 1), "swap_type1", "s")],
                           [Gate(GateKind.MEASURE_Z, (0,), key="m0")]],
                       [COMPUTATIONAL, COMPUTATIONAL, "swap", COMPUTATIONAL])
    nc = apply_noise_model(c, P)
    kinds = [(s.kind, s.prob, s.before) for s in nc.sites]
    # prep_x compiles to prep_z + hadamard
    assert kinds.count((FLIP_X, P, False)) == 2
    assert (DEP1, P, False) in kinds
    assert (DEP2, P, False) in kinds
    assert (DEP2, 3 * P, False) in kinds
    assert (FLIP_X, P, True) in kinds
    assert apply_noise_model(c, P, p_swap=P).p_swap == P


def test_noise_rejects_bad_p():
    c = build_memory_experiment(SurfaceCodeSpec(3))
    for bad in (-0.1, 0.8):
        with pytest.raises(ValueError):
            apply_noise_model(c, bad)


def test_idle_qubits_get_no_noise():
    nc = apply_noise_model(physical("heavy_hexagonal", 3), P)
    busy = {(s.layer, q) for s in nc.sites for q in s.qubits}
    for i, layer in enumerate(nc.circuit.layers):
        for g in layer:
            for q in g.targets:
                assert (i, q) in busy
    assert len(busy) == sum(len(g.targets) for l in nc.circuit.layers for g in l)
