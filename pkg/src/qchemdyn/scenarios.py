"""Reference scenarios shared by the CLI, the examples and the acceptance suite."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import grid as G
from . import kickback as K
from . import measure as Ms
from .prep import ThermalSpec, WavepacketSpec, gaussian_packet, harmonic_eigenstate, incoming_packet


# -- harmonic well -------------------------------------------------------------------

def balanced_harmonic_grid(n: int, omega: float = 1.0, mass: float = 1.0) -> G.GridSpec:
    """Centered grid whose position and momentum ranges match the oscillator's (dx^2 = 2 pi / (N M omega))."""
    N = 1 << n
    dx = math.sqrt(2 * math.pi / (N * mass * omega))
    half = N * dx / 2
    return G.GridSpec(n, 1, ((-half, half),))


@dataclass
class HarmonicScenario:
    plan: K.KickbackPlan
    psi0: G.GridWavefunction
    omega: float
    mass: float
    x0: float

    @property
    def dt(self) -> float:
        return self.plan.dt

    @property
    def period_steps(self) -> int:
        return int(math.ceil(2 * math.pi / (self.omega * self.dt)))

    def potential(self):
        w, m = self.omega, self.mass
        return lambda x: 0.5 * m * w * w * x ** 2


def harmonic_scenario(n: int = 6, m: int = 8, steps: int = 200, omega: float = 1.0, mass: float = 1.0,
                      x0: float = 2.0, live_oracle: bool = False) -> HarmonicScenario:
    """Coherent state displaced by x0 in 0.5 M omega^2 x^2.

    The potential's range on the grid is mapped onto [0, M - 1], which fixes
    dt = 2 pi s / M; the kinetic table uses the same scale.  With
    ``live_oracle`` both terms are evaluated by the Fourier-arithmetic
    quadratic oracle instead of table gates.
    """
    grid = balanced_harmonic_grid(n, omega, mass)
    V = lambda x: 0.5 * mass * omega ** 2 * x ** 2
    plan = K.physical_plan(grid, V, mass, m, steps, meta={"scenario": "harmonic", "omega": omega, "mass": mass})
    if live_oracle:
        s = plan.meta["scale"]
        dx = float(grid.dx[0])
        N = grid.N
        cV = 0.5 * mass * omega ** 2 * dx * dx * s
        cT = (2 * math.pi / (N * dx)) ** 2 / (2 * mass) * s
        plan = K.KickbackPlan(grid, m, K.QuadraticSource.from_coefficient([cV], 12, [N // 2]),
                              K.QuadraticSource.from_coefficient([cT], 12), steps, plan.dt, plan.v_min,
                              dict(plan.meta, live_oracle=True))
    sigma = math.sqrt(1 / (2 * mass * omega))
    psi0 = gaussian_packet(WavepacketSpec((x0,), (0.0,), (sigma,)), grid)
    return HarmonicScenario(plan, psi0, omega, mass, x0)


def ehrenfest_deviation(states, x0: float, omega: float, dt: float, period_steps: int) -> float:
    """max over the first period of |<x>(t) - x0 cos(omega t)| / |x0|.

    ``states`` maps step index -> GridWavefunction (must include every step
    up to one period).
    """
    dev = 0.0
    for k in range(period_steps + 1):
        if k not in states:
            continue
        xm = G.position_expectation(states[k])[0]
        dev = max(dev, abs(xm - x0 * math.cos(omega * k * dt)) / abs(x0))
    return dev


def trotter_errors(n: int = 6, t_total: float = 1.0, divisions=(64, 128, 256, 512, 1024),
                   omega: float = 1.0, mass: float = 1.0, x0: float = 2.0):
    """Global split-operator error vs dt against a Richardson-extrapolated reference.

    Reference: 2 psi(dt_f / 2) - psi(dt_f) with dt_f = t / (4 max division),
    which removes the first-order term.  Returns (dts, errors, slope).
    """
    grid = balanced_harmonic_grid(n, omega, mass)
    V = lambda x: 0.5 * mass * omega ** 2 * x ** 2
    sigma = math.sqrt(1 / (2 * mass * omega))
    psi0 = gaussian_packet(WavepacketSpec((x0,), (0.3,), (sigma,)), grid)
    fine = 4 * max(divisions)
    a = G.classical_split_step(psi0, V, mass, t_total / fine, fine).amplitudes
    b = G.classical_split_step(psi0, V, mass, t_total / (2 * fine), 2 * fine).amplitudes
    ref = 2 * b - a
    dts, errs = [], []
    for d in divisions:
        psi = G.classical_split_step(psi0, V, mass, t_total / d, d)
        dts.append(t_total / d)
        errs.append(float(np.linalg.norm(psi.amplitudes - ref)))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return np.array(dts), np.array(errs), slope


# -- Eckart barrier ----------------------------------------------------------------

@dataclass(frozen=True)
class EckartResult:
    transmitted: float
    analytic_averaged: float
    analytic_fixed: float
    energy: float
    time: float
    boundary_probability: float

    @property
    def rel_error(self) -> float:
        return abs(self.transmitted / self.analytic_averaged - 1)

    @property
    def rel_error_fixed(self) -> float:
        return abs(self.transmitted / self.analytic_fixed - 1)


def eckart_transmission_run(energy: float = 1.0, V0: float = 1.0, alpha: float = 1.0, mass: float = 1.0,
                            n: int = 13, half_width: float = 400.0, start: float = -80.0, sigma: float = 15.0,
                            dt: float = 0.02, chunk: float = 1.0, t_max: float = 400.0) -> EckartResult:
    """Propagate an incoming packet through V0 sech^2(alpha x) until the flux settles.

    The product region is x >= 0.  The oracle is the closed-form
    transmission averaged over the packet's momentum distribution; the
    fixed-energy value at the packet's mean kinetic energy is also reported.
    """
    grid = G.GridSpec(n, 1, ((-half_width, half_width),))
    psi = incoming_packet(energy, mass, grid, start, sigma)
    V = Ms.eckart_potential(V0, alpha)
    avg = Ms.momentum_averaged_transmission(psi, V0, alpha, mass)
    fixed = float(Ms.eckart_transmission(energy, V0, alpha, mass))
    rm = Ms.RegionMap.split(0.0)
    per = max(1, int(round(chunk / dt)))
    hist: list[float] = []
    t = 0.0
    cur = psi
    while t < t_max:
        cur = G.classical_split_step(cur, V, mass, dt, per)
        t += per * dt
        hist.append(Ms.region_probabilities(cur, rm)[1])
        # wait until the packet has reached the barrier before testing for separation
        if t > abs(start) / math.sqrt(2 * energy / mass) and Ms.flux_separated(hist, 1e-6, 10):
            break
    return EckartResult(hist[-1], avg, fixed, energy, t, G.boundary_probability(cur))


# -- thermal rate model ----------------------------------------------------------------

@dataclass(frozen=True)
class RateModel:
    V0: float = 1.0
    alpha: float = 1.0
    mass: float = 1.0
    n: int = 11
    half_width: float = 150.0
    start: float = -30.0
    sigma: float = 4.0
    dt: float = 0.02
    t_max: float = 300.0

    def thermal(self, kT: float = 0.4) -> ThermalSpec:
        return ThermalSpec(kT=kT, e_max=3.0, dE=0.1, levels=((0, 0.0), (1, 0.4)), e0=0.05)

    def grid(self) -> G.GridSpec:
        return G.GridSpec(self.n, 1, ((-self.half_width, self.half_width),))

    def reaction_probability(self, zeta: int, kinetic: float) -> float:
        return _grid_pr(self, round(float(kinetic), 12))


@lru_cache(maxsize=None)
def _grid_pr(model: RateModel, kinetic: float) -> float:
    """Product-region probability for one (zeta, E) bin from grid propagation (1D: depends on E_k only)."""
    grid = model.grid()
    psi = incoming_packet(kinetic, model.mass, grid, model.start, model.sigma)
    V = Ms.eckart_potential(model.V0, model.alpha)
    rm = Ms.RegionMap.split(0.0)
    v = math.sqrt(2 * kinetic / model.mass)
    per = max(1, int(round(1.0 / model.dt)))
    hist: list[float] = []
    t = 0.0
    while t < model.t_max:
        psi = G.classical_split_step(psi, V, model.mass, model.dt, per)
        t += per * model.dt
        hist.append(Ms.region_probabilities(psi, rm)[1])
        if t > abs(model.start) / v and Ms.flux_separated(hist, 1e-7, 10):
            break
    return float(hist[-1])


def rate_job(model: RateModel | None = None, samples: int = 2000, seed: int = 7, kT: float = 0.4) -> Ms.RateJob:
    model = model or RateModel()
    return Ms.RateJob(model.thermal(kT), model.reaction_probability, samples, seed)


# -- phase estimation on harmonic eigenstates ---------------------------------------------

@dataclass(frozen=True)
class PhaseGapResult:
    t: int
    dt: float
    omega: float
    bins: tuple[int, int]
    estimated_gap: float  # turns
    expected_gap: float  # omega dt / 2 pi

    @property
    def error(self) -> float:
        return abs(self.estimated_gap - self.expected_gap)


def phase_gap_run(t: int = 8, dt: float = 0.25, omega: float = 1.0, mass: float = 1.0, n: int = 7,
                  shots: int = 0, seed=None) -> PhaseGapResult:
    """Modal bins for v = 0 and v = 1 under one split step; gap = phi_0 - phi_1 (mod 1)."""
    grid = G.GridSpec(n, 1, ((-8.0, 8.0),))
    V = G.potential_on_grid(grid, lambda x: 0.5 * mass * omega ** 2 * x ** 2)
    T = G.kinetic_on_grid(grid, mass)
    vph = np.exp(-1j * V * dt)
    tph = np.exp(-1j * T * dt)

    def U(a):
        return np.fft.ifft(tph * np.fft.fft(vph * a, norm="ortho"), norm="ortho")

    job = Ms.PhaseEstimationJob(U, t, shots, seed)
    b = []
    for v in (0, 1):
        h = Ms.phase_estimate(job, harmonic_eigenstate(v, omega, mass, grid))
        b.append(h.modal_bin())
    R = 1 << t
    gap = ((b[0] - b[1]) % R) / R
    return PhaseGapResult(t, dt, omega, (b[0], b[1]), gap, omega * dt / (2 * math.pi))


# -- state-to-state --------------------------------------------------------------------

def sixty_forty(n: int = 7, omega: float = 1.0, mass: float = 1.0, vmax: int = 5, mixture: bool = True):
    """A 60/40 combination of v = 0 and v = 1 (ensemble or coherent superposition) and its analysis."""
    grid = G.GridSpec(n, 1, ((-8.0, 8.0),))
    well = Ms.HarmonicWell(omega, mass, 0.0)
    phi0 = harmonic_eigenstate(0, omega, mass, grid)
    phi1 = harmonic_eigenstate(1, omega, mass, grid)
    if mixture:
        state = [(0.6, phi0), (0.4, phi1)]
    else:
        state = G.normalized(grid, math.sqrt(0.6) * phi0.amplitudes + math.sqrt(0.4) * phi1.amplitudes)
    return Ms.state_to_state(state, well, vmax)
