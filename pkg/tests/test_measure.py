import math

import numpy as np
import pytest

from qchemdyn import grid as G, measure as Ms, prep
from qchemdyn.prep import ThermalSpec


def test_region_map_labels_and_overlap():
    rm = Ms.RegionMap({1: [((0.0, 1.0),)], 2: [((1.0, 2.0),)]}, default=0, names={1: "A"})
    assert rm.label([0.5]) == 1 and rm.label([1.0]) == 2 and rm.label([-3.0]) == 0
    assert rm.n_label_qubits == 2
    with pytest.raises(ValueError, match="overlap"):
        Ms.RegionMap({1: [((0.0, 1.0),)], 2: [((0.5, 2.0),)]})
    spec = G.GridSpec(3, 1, ((-1.0, 3.0),))
    assert list(rm.label_grid(spec)) == [0, 0, 1, 1, 2, 2, 0, 0]


def test_reaction_probability_exact_and_circuit_sampling():
    spec = G.GridSpec(6, 1, ((-10.0, 10.0),))
    psi = prep.gaussian_packet(prep.WavepacketSpec(1.0, 0.0, 1.0), spec)
    rm = Ms.RegionMap.split(0.0)
    direct = Ms.reaction_probability(psi, rm, [1], shots=4000, seed=3)
    circ = Ms.reaction_probability(psi, rm, [1], shots=4000, seed=3, via_circuit=True)
    assert direct.exact == pytest.approx(circ.exact)
    assert abs(circ.estimate - circ.exact) < 4 * circ.stderr + 1e-3
    assert direct.as_record("h")["scenario_hash"] == "h"
    with pytest.raises(ValueError):
        Ms.reaction_probability(psi, rm, [5])


def test_flux_separated():
    assert not Ms.flux_separated([0.1, 0.2, 0.3], 1e-6, 2)
    assert Ms.flux_separated([0.1] + [0.5] * 12, 1e-6, 10)


def test_eckart_transmission_limits_and_symmetry():
    E = np.array([0.05, 1.0, 20.0])
    T = Ms.eckart_transmission(E, 1.0, 1.0, 1.0)
    # sech^2 barrier, hbar = 1: sinh^2(pi k / a) / (sinh^2(pi k / a) + cosh^2(pi/2 sqrt(8 M V0 / a^2 - 1)))
    s2 = np.sinh(np.pi * np.sqrt(2 * E)) ** 2
    np.testing.assert_allclose(T, s2 / (s2 + np.cosh(np.pi / 2 * math.sqrt(7.0)) ** 2), rtol=1e-12)
    assert T[2] > 0.999
    V = Ms.eckart_potential(2.0, 0.5)
    assert V(0.0) == pytest.approx(2.0)
    assert V(3.0) == pytest.approx(V(-3.0))
    assert np.isfinite(V(np.array([1e6])))


def test_momentum_averaged_transmission_approaches_fixed_energy_for_narrow_spread():
    spec = G.GridSpec(12, 1, ((-600.0, 600.0),))
    psi = prep.incoming_packet(1.2, 1.0, spec, -150.0, 40.0)
    avg = Ms.momentum_averaged_transmission(psi, 1.0, 1.0, 1.0)
    assert avg == pytest.approx(float(Ms.eckart_transmission(1.2, 1.0, 1.0, 1.0)), rel=0.01)


def test_rate_constant_monte_carlo_vs_quadrature():
    ts = ThermalSpec(kT=0.5, e_max=2.0, dE=0.1, levels=((0, 0.0), (1, 0.3)), e0=0.05)
    pr = lambda zeta, ek: 1 / (1 + math.exp(-4 * (ek - 0.6)))
    k_exact = Ms.rate_quadrature(ts, pr)
    est = Ms.rate_constant(Ms.RateJob(ts, pr, 4000, seed=1))
    assert abs(est.k - k_exact) < 4 * est.stderr
    assert est.raw_probability == pytest.approx(est.k * est.c2)
    again = Ms.rate_constant(Ms.RateJob(ts, pr, 4000, seed=1))
    assert again.k == est.k
    sizes, rms, slope = Ms.mc_convergence(Ms.RateJob(ts, pr, 10, seed=2), [50, 200, 800, 3200], 60, k_exact)
    assert slope == pytest.approx(-0.5, abs=0.15)


def test_phase_estimation_vector_and_gate_level_agree():
    t, theta = 5, 2 * math.pi * 0.3
    gate = Ms.phase_estimate_gate_level(t, theta)
    vec = Ms.phase_estimate(Ms.PhaseEstimationJob(lambda a: np.exp(1j * theta) * a, t), np.array([1.0 + 0j]))
    np.testing.assert_allclose(gate.probabilities, vec.probabilities, atol=1e-12)
    assert vec.modal_bin() == round(0.3 * 32)
    exact = Ms.phase_estimate_gate_level(4, 2 * math.pi * 5 / 16)
    assert exact.probabilities[5] == pytest.approx(1.0)
    sampled = Ms.phase_estimate_gate_level(4, 2 * math.pi * 5 / 16, shots=100, seed=0)
    assert sampled.counts[5] == 100
    with pytest.raises(ValueError):
        Ms.PhaseEstimationJob(lambda a: a, 20)


def test_phase_histogram_peaks():
    h = Ms.PhaseHistogram(3, np.array([0.1, 0.5, 0.1, 0.0, 0.05, 0.2, 0.05, 0.0]))
    assert h.peaks(2) == [1, 5]
    assert h.phase(4) == 0.5


def test_state_to_state_completeness_and_mixture():
    spec = G.GridSpec(7, 1, ((-8.0, 8.0),))
    well = Ms.HarmonicWell(1.0)
    coh = prep.gaussian_packet(prep.WavepacketSpec(1.0, 0.0, math.sqrt(0.5)), spec)
    res = Ms.state_to_state(coh, well, 4)
    # coherent state with alpha^2 = x0^2 / 2: Poisson populations
    a2 = 0.5
    for v in range(5):
        assert res.populations[v] == pytest.approx(math.exp(-a2) * a2 ** v / math.factorial(v), abs=1e-8)
    assert res.total() == pytest.approx(1.0, abs=1e-12)
    assert res.flagged is False
    phi = [prep.harmonic_eigenstate(v, 1.0, 1.0, spec) for v in range(2)]
    mix = Ms.state_to_state([(3.0, phi[0]), (1.0, phi[1])], well, 3)
    assert mix.populations[0] == pytest.approx(0.75, abs=1e-10)


def test_state_to_state_with_linear_map():
    spec = G.GridSpec(7, 1, ((-8.0, 8.0),))
    psi = prep.harmonic_eigenstate(1, 1.0, 1.0, spec, center=1.0)
    shifted = Ms.state_to_state(psi, Ms.HarmonicWell(1.0), 3, cmap=Ms.LinearMap(np.eye(1), [1.0]))
    assert shifted.populations[1] == pytest.approx(1.0, abs=1e-8)
    assert shifted.map_norm_loss < 1e-8
    with pytest.raises(ValueError):
        Ms.LinearMap(np.zeros((1, 1)), [0.0])


def test_closest_name():
    assert Ms.closest_name("harmonc", ["harmonic", "eckart"]) == "harmonic"
