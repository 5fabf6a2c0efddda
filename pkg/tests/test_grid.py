import math

import numpy as np
import pytest

from qchemdyn import grid as G


def test_spec_validation_and_geometry():
    spec = G.GridSpec(4, 2, ((-1.0, 1.0), (0.0, 4.0)))
    assert spec.N == 16 and spec.n_points == 256 and spec.shape == (16, 16)
    np.testing.assert_allclose(spec.dx, [2 / 16, 4 / 16])
    assert spec.cell_volume == pytest.approx(2 / 16 * 4 / 16)
    assert spec.axis(0)[0] == -1.0
    with pytest.raises(ValueError):
        G.GridSpec(0, 1, ((0.0, 1.0),))
    with pytest.raises(ValueError):
        G.GridSpec(3, 1, ((1.0, 1.0),))


def test_momentum_axis_wraparound_with_negative_nyquist():
    k = G.momentum_axis(4, 1.0)
    np.testing.assert_allclose(k, 2 * math.pi / 4 * np.array([0, 1, -2, -1]))
    np.testing.assert_allclose(G.momentum_axis(8, 0.5), 2 * math.pi * np.fft.fftfreq(8, 0.5))


def test_coordinate_uses_c_order():
    spec = G.GridSpec(2, 2, ((0.0, 4.0), (0.0, 8.0)))
    # axis 0 is the most significant digit of the flat index
    np.testing.assert_allclose(spec.coordinate(1), [0.0, 2.0])
    np.testing.assert_allclose(spec.coordinate(4), [1.0, 0.0])


def _gauss(spec, c=0.0, p=0.0, s=1.0):
    return G.init_wavefunction(spec, lambda x: np.exp(-(x - c) ** 2 / (4 * s * s) + 1j * p * x))


def test_normalized_and_expectations():
    spec = G.GridSpec(8, 1, ((-20.0, 20.0),))
    psi = _gauss(spec, c=1.5, p=0.7)
    assert psi.norm() == pytest.approx(1.0)
    assert G.position_expectation(psi)[0] == pytest.approx(1.5, abs=1e-9)
    assert G.momentum_expectation(psi)[0] == pytest.approx(0.7, abs=1e-9)
    assert G.momentum_spread(psi)[0] == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        G.normalized(spec, np.zeros(spec.n_points))


def test_split_step_is_unitary_and_exact_without_potential():
    spec = G.GridSpec(7, 1, ((-15.0, 15.0),))
    psi = _gauss(spec, c=-2.0, p=1.0)
    free = G.classical_split_step(psi, 0.0, 1.0, 0.05, 40)
    ref = G.exact_propagator(psi, 0.0, 1.0, 2.0)
    assert free.norm() == pytest.approx(1.0, abs=1e-12)
    assert G.fidelity(free, ref) == pytest.approx(1.0, abs=1e-10)


def test_split_step_first_order_convergence():
    spec = G.GridSpec(6, 1, ((-8.0, 8.0),))
    V = lambda x: 0.5 * x ** 2
    psi = _gauss(spec, c=1.0, s=0.8)
    ref = G.exact_propagator(psi, V, 1.0, 1.0)
    errs = [np.linalg.norm(G.classical_split_step(psi, V, 1.0, 1.0 / k, k).amplitudes - ref.amplitudes)
            for k in (50, 100, 200)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)


def test_potential_must_be_finite():
    spec = G.GridSpec(3, 1, ((-1.0, 1.0),))
    with pytest.raises(ValueError):
        with np.errstate(divide="ignore"):
            G.potential_on_grid(spec, lambda x: 1 / x)


def test_probability_in_box_and_boundary():
    spec = G.GridSpec(8, 1, ((-10.0, 10.0),))
    psi = _gauss(spec)
    # the half-open box holds the x = 0 point, so it gets half of that point's weight extra
    center = psi.density()[spec.N // 2]
    assert G.probability_in_box(psi, [(0.0, 10.0)]) == pytest.approx(0.5 + center / 2, abs=1e-9)
    assert G.boundary_probability(psi) < 1e-12
    edge = _gauss(spec, c=9.0)
    with pytest.warns(RuntimeWarning):
        G.warn_if_near_boundary(edge)


def test_snapshot_round_trips(tmp_path):
    spec = G.GridSpec(3, 2, ((-1.0, 1.0), (-1.0, 1.0)))
    rng = np.random.default_rng(0)
    psi = G.normalized(spec, rng.normal(size=64) + 1j * rng.normal(size=64))
    G.save_binary(psi, tmp_path / "s.bin")
    back = G.load_binary(tmp_path / "s.bin", spec.extent)
    np.testing.assert_array_equal(back.amplitudes, psi.amplitudes)
    assert (tmp_path / "s.bin").stat().st_size == 8 + 16 * 64
    G.save_csv(psi, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,x0,x1,re,im" and len(lines) == 65
    assert complex(float(lines[1].split(",")[3]), float(lines[1].split(",")[4])) == psi.amplitudes[0]
