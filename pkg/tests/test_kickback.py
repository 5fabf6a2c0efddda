import math

import numpy as np
import pytest

from qchemdyn import arith, grid as G, kickback as K
from qchemdyn.qsim import CircuitState, RegisterLayout


def test_ancilla_is_an_eigenstate_of_addition():
    m = 4
    v = K.ancilla_vector(m)
    np.testing.assert_allclose(v, np.exp(2j * np.pi * np.arange(16) / 16) / 4, atol=1e-12)
    for q in range(16):
        # |y> -> |y + q>: the vector picks up exp(-2 pi i q / M)
        np.testing.assert_allclose(np.roll(v, q), np.exp(-2j * np.pi * q / 16) * v, atol=1e-12)
    L = RegisterLayout([("anc", m)])
    st = CircuitState.basis(L).run(K.ancilla_circuit(m))
    np.testing.assert_allclose(st.amplitudes, v, atol=1e-12)


def test_phase_check_random_tables():
    rng = np.random.default_rng(4)
    spec = G.GridSpec(4, 1, ((-1.0, 1.0),))
    psi = G.normalized(spec, rng.normal(size=16) + 1j * rng.normal(size=16))
    for _ in range(5):
        dev, sep = K.kickback_phase_check(rng.integers(0, 32, 16), spec, 5, psi)
        assert dev < 1e-12 and sep < 1e-12


def test_quantize_auto_and_explicit_scale():
    spec = G.GridSpec(4, 1, ((-2.0, 2.0),))
    q = K.quantize_potential(lambda x: x ** 2, spec, 5)
    assert q.table.min() == 0 and q.table.max() == 31 and not q.wrapped
    assert q.max_phase_error == pytest.approx(math.pi / 32)
    q2 = K.quantize_potential(lambda x: x ** 2, spec, 5, scale=20.0)
    assert q2.wrapped and q2.table.max() < 32
    assert K.scale_for_dt(q.dt, 5) == pytest.approx(q.scale)


def _harmonic_plan(n=4, m=6, steps=6):
    N = 1 << n
    dx = math.sqrt(2 * math.pi / N)
    spec = G.GridSpec(n, 1, ((-N * dx / 2, N * dx / 2),))
    plan = K.physical_plan(spec, lambda x: 0.5 * x ** 2, 1.0, m, steps)
    psi0 = G.init_wavefunction(spec, lambda x: np.exp(-(x - 0.5) ** 2))
    return plan, psi0


def test_evolve_matches_classical_oracle():
    plan, psi0 = _harmonic_plan()
    tr = K.evolve(plan, psi0, snapshot_every=2)
    assert [s for s, _ in tr.snapshots] == [2, 4, 6]
    assert min(tr.fidelities) > 1 - 1e-10
    assert tr.max_separability_deviation < 1e-10
    ref = K.classical_oracle(plan, psi0)
    assert G.fidelity(tr.final, ref) == pytest.approx(tr.final_fidelity, abs=1e-10)
    man = tr.manifest()
    assert man["steps"] == 6 and man["gates_per_step"]["oracle"] == 2


def test_step_sections_and_resource_report():
    plan, _ = _harmonic_plan()
    step = K.step_circuit(plan)
    assert set(step.sections) >= {"V", "to_momentum", "T", "to_position"}
    rep = K.resource_report(plan)
    assert rep["qubits_required"] == 4 + 6
    assert rep["rotation_class_total"] == rep["rotation_class_per_step"] * plan.steps


def test_live_quadratic_oracle_matches_its_table():
    n, m = 3, 6
    spec = G.GridSpec(n, 1, ((-2.0, 2.0),))
    plan = K.KickbackPlan(spec, m, K.QuadraticSource.from_coefficient([0.9], 8, [4]),
                          K.QuadraticSource.from_coefficient([0.6], 8), steps=3)
    psi0 = G.init_wavefunction(spec, lambda x: np.exp(-x ** 2) * (1 + 0.3j * x))
    tr = K.evolve(plan, psi0)
    assert tr.final_fidelity > 1 - 1e-10
    assert tr.max_separability_deviation < 1e-10
    # sanity: the table is the rounded quadratic
    np.testing.assert_allclose(plan.v_table(), np.round(0.9 * (np.arange(8) - 4) ** 2), atol=n * n)


def test_resource_cap_is_checked_before_simulation():
    fmt = arith.CoulombFormat.default(4)
    plan = K.KickbackPlan(G.GridSpec(4, 2, ((0.0, 1.0),)), 6, K.CoulombSource(fmt, [1, 1]), None)
    with pytest.raises(K.ResourceCapError) as e:
        K.evolve(plan, G.normalized(plan.grid, np.ones(256)))
    assert e.value.report["qubits_required"] > 26
    assert e.value.report["gates_per_step"]["rotation_class"] > 0


def test_coulomb_source_preconditions():
    fmt = arith.CoulombFormat.default(4)
    with pytest.raises(ValueError):
        K.CoulombSource(fmt, [1, 1]).scratch(G.GridSpec(5, 2, ((0.0, 1.0),)))
    with pytest.raises(ValueError):
        K.CoulombSource(fmt, [1, 1, 1]).scratch(G.GridSpec(4, 2, ((0.0, 1.0),)))


def test_table_source_checks_size():
    spec = G.GridSpec(3, 1, ((0.0, 1.0),))
    with pytest.raises(ValueError):
        K.TableSource(np.arange(4)).table(spec, 4)


def test_wrong_grid_rejected():
    plan, _ = _harmonic_plan()
    other = G.normalized(G.GridSpec(4, 1, ((0.0, 1.0),)), np.ones(16))
    with pytest.raises(ValueError):
        K.evolve(plan, other)
