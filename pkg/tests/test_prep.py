import math

import numpy as np
import pytest

from qchemdyn import grid as G, prep
from qchemdyn.qsim import Circuit, CircuitState, RegisterLayout, dense_unitary


def test_gaussian_packet_moments_and_checks():
    spec = G.GridSpec(8, 1, ((-20.0, 20.0),))
    psi = prep.gaussian_packet(prep.WavepacketSpec(2.0, 0.5, 1.5), spec)
    assert G.position_expectation(psi)[0] == pytest.approx(2.0, abs=1e-9)
    assert G.momentum_expectation(psi)[0] == pytest.approx(0.5, abs=1e-9)
    x = spec.axis(0)
    assert math.sqrt(np.sum(psi.density() * (x - 2.0) ** 2)) == pytest.approx(1.5, rel=1e-6)
    with pytest.raises(ValueError, match="two grid spacings"):
        prep.gaussian_packet(prep.WavepacketSpec(0.0, 0.0, 0.1), spec)
    with pytest.raises(ValueError, match="boundary"):
        prep.gaussian_packet(prep.WavepacketSpec(17.0, 0.0, 1.0), spec)
    with pytest.raises(ValueError):
        prep.WavepacketSpec((0.0, 1.0), 0.0, (1.0, 1.0, 1.0))


def test_harmonic_eigenstates_orthonormal_and_ground_is_gaussian():
    spec = G.GridSpec(7, 1, ((-8.0, 8.0),))
    states = [prep.harmonic_eigenstate(v, 1.0, 1.0, spec) for v in range(6)]
    S = np.array([[G.overlap(a, b) for b in states] for a in states])
    np.testing.assert_allclose(S, np.eye(6), atol=1e-10)
    g = prep.gaussian_packet(prep.WavepacketSpec(0.0, 0.0, math.sqrt(0.5)), spec)
    assert G.fidelity(g, states[0]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="not resolvable"):
        prep.harmonic_eigenstate(40, 1.0, 1.0, spec)


def test_hermite_recurrence_matches_closed_form():
    xi = np.linspace(-3, 3, 13)
    h = prep.hermite_functions(3, xi)
    h3 = (8 * xi ** 3 - 12 * xi) * np.exp(-xi ** 2 / 2) / math.sqrt(2 ** 3 * 6 * math.sqrt(math.pi))
    np.testing.assert_allclose(h[3], h3, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7])
def test_amplitude_loading_is_exact(n):
    rng = np.random.default_rng(n)
    target = rng.random(1 << n)
    target[rng.random(1 << n) < 0.3] = 0.0
    if not target.any():
        target[0] = 1.0
    c = prep.amplitude_load_circuit(target)
    st = CircuitState.basis(RegisterLayout([("x", n)])).run(c)
    np.testing.assert_allclose(st.amplitudes, np.sqrt(target / target.sum()), atol=1e-12)


def test_amplitude_loading_delta_uses_x_gates():
    c = prep.amplitude_load_circuit(np.eye(8)[5])
    assert [g.name for g in c.gates] == ["x", "x"]
    with pytest.raises(ValueError):
        prep.amplitude_load_circuit(np.ones(6))
    with pytest.raises(ValueError):
        prep.amplitude_load_circuit(np.zeros(4))


def test_uniformly_controlled_ry_matches_block_diagonal():
    angles = [0.3, -1.1, 2.0, 0.7]
    c = Circuit(3)
    prep.uniformly_controlled_ry(c, [0, 1], 2, angles)
    U = dense_unitary(c)
    for ctrl, th in enumerate(angles):
        blk = U[np.ix_([ctrl, ctrl + 4], [ctrl, ctrl + 4])]
        np.testing.assert_allclose(blk, [[math.cos(th / 2), -math.sin(th / 2)],
                                         [math.sin(th / 2), math.cos(th / 2)]], atol=1e-12)


def test_thermal_spec_and_sampling():
    ts = prep.ThermalSpec(kT=1.0, e_max=5.0, dE=0.5, levels=((0, 0.0), (1, 1.0)))
    assert ts.partition == pytest.approx(1 + math.exp(-1))
    bins = ts.bins()
    assert sum(g for _, _, g in bins) * ts.normalization() == pytest.approx(1.0)
    assert all(E >= 1.0 for z, E, _ in bins if z == 1)
    s = prep.thermal_sample(ts, 1, 50000)
    w = np.array([g for _, _, g in bins])
    p0 = w[[i for i, b in enumerate(bins) if b[0] == 0]].sum() / w.sum()
    assert sum(x.zeta == 0 for x in s) / len(s) == pytest.approx(p0, abs=0.01)
    assert [x.energy for x in prep.thermal_sample(ts, 9, 5)] == [x.energy for x in prep.thermal_sample(ts, 9, 5)]
    with pytest.raises(ValueError):
        prep.ThermalSpec(kT=0.0, e_max=1.0, dE=0.1, levels=((0, 0.0),))


def test_incoming_packet_mean_kinetic_energy():
    spec = G.GridSpec(10, 1, ((-100.0, 100.0),))
    psi = prep.incoming_packet(0.8, 1.0, spec, -40.0, 5.0)
    k = spec.momenta(0)
    pk = np.abs(np.fft.fft(psi.amplitudes)) ** 2
    assert float(np.sum(pk * k ** 2) / pk.sum() / 2) == pytest.approx(0.8, rel=1e-6)
    with pytest.raises(ValueError):
        prep.incoming_packet(1e-4, 1.0, spec, 0.0, 1.0)
