import math

import numpy as np
import pytest

from qchemdyn import grid as G
from qchemdyn.qsim import (Circuit, CircuitState, Gate, NotBasisError, QubitCapError, RegisterLayout,
                           SeparabilityError, dense_unitary, extract_grid_state, iqft, load_grid_state, qft,
                           schmidt_split, simulate_basis)


def test_layout_packs_registers_lsb_first():
    L = RegisterLayout([("a", 3), ("b", 2)])
    assert L.n_qubits == 5
    assert L.qubits("b") == (3, 4)
    idx = L.index_of({"a": 5, "b": 2})
    assert idx == 5 | (2 << 3)
    assert L.value_of(idx, "a") == 5 and L.value_of(idx, "b") == 2
    with pytest.raises(ValueError):
        L.index_of({"b": 4})
    with pytest.raises(QubitCapError):
        RegisterLayout([("x", 30)])
    with pytest.raises(ValueError):
        RegisterLayout([("x", 1), ("x", 2)])


def test_qft_matrix_and_inverse_match_numpy():
    n, M = 3, 8
    c = Circuit(n)
    qft(c, range(n))
    U = dense_unitary(c)
    j, y = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    F = np.exp(2j * np.pi * j * y / M).T / math.sqrt(M)
    np.testing.assert_allclose(U, F, atol=1e-12)
    ci = Circuit(n)
    iqft(ci, range(n))
    v = np.random.default_rng(1).normal(size=M) + 0j
    np.testing.assert_allclose(dense_unitary(ci) @ v, np.fft.fft(v, norm="ortho"), atol=1e-12)


def test_single_and_controlled_gate_matrices():
    c = Circuit(1).ry(0.7, 0)
    U = dense_unitary(c)
    np.testing.assert_allclose(U, [[math.cos(0.35), -math.sin(0.35)], [math.sin(0.35), math.cos(0.35)]], atol=1e-15)
    c = Circuit(3).ccp(0.3, 0, 1, 2)
    d = np.ones(8, dtype=complex)
    d[7] = np.exp(0.3j)
    np.testing.assert_allclose(dense_unitary(c), np.diag(d), atol=1e-15)
    c = Circuit(2).cx(0, 1)
    np.testing.assert_allclose(np.abs(dense_unitary(c)), [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]])


def test_inverse_circuit_composes_to_identity():
    rng = np.random.default_rng(2)
    c = Circuit(4)
    for _ in range(30):
        k = rng.integers(5)
        q = [int(v) for v in rng.permutation(4)[:3]]
        [lambda: c.h(q[0]), lambda: c.ry(rng.normal(), q[0]), lambda: c.cp(rng.normal(), q[0], q[1]),
         lambda: c.ccp(rng.normal(), *q), lambda: c.cx(q[0], q[1])][k]()
    full = Circuit(4).extend(c).extend(c.inverse())
    np.testing.assert_allclose(dense_unitary(full), np.eye(16), atol=1e-12)


def test_tally_classes():
    c = Circuit(3).h(0).p(0.1, 1).cp(0.2, 0, 1).ccp(0.3, 0, 1, 2).cx(0, 2).swap(1, 2)
    t = c.tally()
    assert (t.single, t.crot, t.ccrot, t.cnot, t.swap) == (2, 1, 1, 1, 1)
    assert t.rotation_class == 1 + 1 + 5 * 1
    assert t.as_dict()["total"] == 6


def test_text_round_trip():
    c = Circuit(3).h(0).ry(0.25, 1).cp(-0.5, 0, 2).table_add([0, 1], [2], [0, 1, 1, 0])
    back = Circuit.from_text(c.to_text())
    assert back.to_text() == c.to_text()
    np.testing.assert_allclose(dense_unitary(back), dense_unitary(c))
    assert Gate("cp", (0, 1), 0.5).inverse().angle == -0.5


def test_table_gates_act_on_basis_states():
    L = RegisterLayout([("x", 2), ("y", 3)])
    table = [3, 5, 7, 6]
    c = Circuit.on(L).table_add(L.qubits("x"), L.qubits("y"), table)
    for x in range(4):
        st = CircuitState.basis(L, {"x": x, "y": 4}).run(c)
        assert int(np.argmax(np.abs(st.amplitudes))) == L.index_of({"x": x, "y": (4 + table[x]) % 8})


def test_simulate_basis_product_and_entangling_paths():
    # Fourier-space adder: product-state path
    from qchemdyn import arith
    ac = arith.draper_add(3)
    ins = [ac.layout.index_of({"a": a, "b": b}) for a in range(8) for b in range(8)]
    outs, phases = simulate_basis(ac.circuit, ins)
    for i, o in zip(ins, outs):
        st = CircuitState(ac.layout, np.eye(1 << ac.n_qubits)[i].astype(complex)).run(ac.circuit)
        assert int(np.argmax(np.abs(st.amplitudes))) == o
    # entangle and disentangle: falls back to the active-set simulator
    c = Circuit(3).h(0).cx(0, 1).cx(0, 1).h(0).x(2)
    outs, _ = simulate_basis(c, [0, 1, 2])
    assert outs == [4, 5, 6]
    with pytest.raises(NotBasisError):
        simulate_basis(Circuit(1).h(0), [0])


def test_measure_register_is_seeded():
    L = RegisterLayout([("r", 2)])
    st = CircuitState.basis(L).run(Circuit.on(L).h(0).h(1))
    a = st.measure_register("r", 1000, seed=5)
    assert a == st.measure_register("r", 1000, seed=5)
    assert sum(a.values()) == 1000
    np.testing.assert_allclose(st.probabilities("r"), 0.25)


def test_grid_state_load_split_extract():
    spec = G.GridSpec(3, 1, ((-1.0, 1.0),))
    psi = G.normalized(spec, np.arange(8) + 1j)
    L = RegisterLayout([("x0", 3), ("anc", 2)])
    st = load_grid_state(psi, L, ["x0"])
    st.run(Circuit.on(L).h(L.qubits("anc")[0]))
    pos, anc, dev = schmidt_split(st, ["x0"])
    assert dev < 1e-12
    back = extract_grid_state(st, spec, ["x0"])
    assert G.fidelity(back, psi) == pytest.approx(1.0)
    # entangle position and ancilla: extraction must refuse
    st.run(Circuit.on(L).cx(L.qubits("x0")[0], L.qubits("anc")[1]))
    with pytest.raises(SeparabilityError):
        extract_grid_state(st, spec, ["x0"])
