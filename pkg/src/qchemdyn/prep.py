"""Initial states: Gaussian packets, harmonic eigenstates, amplitude loading, thermal ensembles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridSpec, GridWavefunction, boundary_probability, normalized
from .qsim import Circuit


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian with |psi|^2 standard deviation ``sigma`` per axis."""

    center: tuple[float, ...]
    momentum: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        c, p, s = (tuple(np.atleast_1d(np.asarray(v, dtype=float))) for v in (self.center, self.momentum, self.sigma))
        d = max(len(c), len(p), len(s))
        c, p, s = (v * d if len(v) == 1 else v for v in (c, p, s))
        if not len(c) == len(p) == len(s):
            raise ValueError("center, momentum and sigma need the same number of axes")
        if any(v <= 0 for v in s):
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "momentum", p)
        object.__setattr__(self, "sigma", s)


def gaussian_packet(spec: WavepacketSpec, grid: GridSpec, check_support: bool = True) -> GridWavefunction:
    if len(spec.center) != grid.d:
        raise ValueError(f"packet has {len(spec.center)} axes, grid has {grid.d}")
    for ax, (c, s) in enumerate(zip(spec.center, spec.sigma)):
        if s < 2 * grid.dx[ax]:
            raise ValueError(f"sigma {s} is below two grid spacings ({2 * grid.dx[ax]:.4g}) on axis {ax}")
        lo, hi = grid.extent[ax]
        if check_support and (c - 5 * s < lo or c + 5 * s > hi):
            raise ValueError(f"packet on axis {ax} is within 5 sigma of the boundary")
    mesh = grid.mesh()
    log = np.zeros(grid.shape, dtype=complex)
    for x, c, p, s in zip(mesh, spec.center, spec.momentum, spec.sigma):
        log += -((x - c) ** 2) / (4 * s * s) + 1j * p * (x - c)
    return normalized(grid, np.exp(log))


def hermite_functions(vmax: int, xi: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions psi_0..psi_vmax at xi (stable recurrence)."""
    out = np.empty((vmax + 1,) + xi.shape)
    out[0] = math.pi ** -0.25 * np.exp(-xi ** 2 / 2)
    if vmax >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for v in range(1, vmax):
        out[v + 1] = math.sqrt(2.0 / (v + 1)) * xi * out[v] - math.sqrt(v / (v + 1)) * out[v - 1]
    return out


MAX_V = 60


def harmonic_eigenstate(v: int, omega: float, mass: float, grid: GridSpec, center: float = 0.0,
                        axis: int = 0, tol: float = 1e-10) -> GridWavefunction:
    """Eigenstate v of (1/2) M omega^2 (x - center)^2 on a 1D grid (or along one axis of a 1D slice)."""
    if grid.d != 1:
        raise ValueError("harmonic_eigenstate builds 1D states; take products for more axes")
    if not 0 <= v <= MAX_V:
        raise ValueError(f"v must lie in [0, {MAX_V}]")
    if omega <= 0 or mass <= 0:
        raise ValueError("omega and mass must be positive")
    a = math.sqrt(mass * omega)
    p_turn = math.sqrt((2 * v + 1) * mass * omega)
    if p_turn + 4 * a > math.pi / grid.dx[0]:
        raise ValueError(f"v={v} is not resolvable: momentum exceeds the grid's Nyquist limit")
    x = grid.axis(0)
    psi = normalized(grid, hermite_functions(v, a * (x - center))[v])
    if boundary_probability(psi) > tol:
        raise ValueError(f"v={v} is not resolvable: the state reaches the grid boundary")
    return psi


# -- amplitude loading ---------------------------------------------------------

def _gray(i: int) -> int:
    return i ^ (i >> 1)


def uniformly_controlled_ry(circ: Circuit, controls: Sequence[int], target: int, angles: Sequence[float],
                            atol: float = 1e-15) -> None:
    """Apply RY(angles[c]) to ``target`` where c is the control value (controls LSB first).

    Gray-code decomposition: 2^k RY gates and 2^k CNOTs for k controls.
    """
    k = len(controls)
    alpha = np.asarray(angles, dtype=float)
    if alpha.size != 1 << k:
        raise ValueError(f"need {1 << k} angles for {k} controls")
    if k == 0:
        if abs(alpha[0]) > atol:
            circ.ry(float(alpha[0]), target)
        return
    n = 1 << k
    g = np.array([_gray(i) for i in range(n)])
    c = np.arange(n)
    parity = np.array([[bin(int(ci) & int(gi)).count("1") & 1 for gi in g] for ci in c])
    Mmat = 1.0 - 2.0 * parity
    theta = Mmat.T @ alpha / n
    for i in range(n):
        if abs(theta[i]) > atol:
            circ.ry(float(theta[i]), target)
        changed = g[i] ^ g[(i + 1) % n]
        circ.cx(controls[int(changed).bit_length() - 1], target)


def amplitude_load_circuit(target, qubits: Sequence[int] | None = None, n_qubits: int | None = None) -> Circuit:
    """Circuit mapping |0...0> to sum_x sqrt(target[x] / sum target)|x>.

    Recursive bisection: the most significant qubit splits the interval
    first; at each level the rotation angle per prefix is set by the
    probability mass of the left half of its interval.
    """
    mass = np.asarray(target, dtype=float).reshape(-1)
    if np.any(mass < 0) or not np.all(np.isfinite(mass)):
        raise ValueError("target masses must be finite and non-negative")
    total = mass.sum()
    if total <= 0:
        raise ValueError("target has no mass")
    n = int(round(math.log2(mass.size)))
    if 1 << n != mass.size:
        raise ValueError("target length must be a power of two")
    qs = list(range(n)) if qubits is None else list(qubits)
    if len(qs) != n:
        raise ValueError(f"need {n} qubits")
    circ = Circuit(n_qubits if n_qubits is not None else max(qs) + 1)
    nz = np.flatnonzero(mass)
    if nz.size == 1:
        for b in range(n):
            if (nz[0] >> b) & 1:
                circ.x(qs[b])
        return circ
    for level in range(n):
        width = 1 << (n - level)
        blocks = mass.reshape(-1, width)
        left = blocks[:, : width // 2].sum(axis=1)
        tot = blocks.sum(axis=1)
        ratio = np.divide(left, tot, out=np.ones_like(left), where=tot > 0)
        angles = 2 * np.arccos(np.sqrt(np.clip(ratio, 0.0, 1.0)))
        uniformly_controlled_ry(circ, qs[n - level:], qs[n - 1 - level], angles)
    return circ


# -- thermal ensembles ---------------------------------------------------------

@dataclass(frozen=True)
class ThermalSpec:
    """Reactant levels (zeta, E_zeta) and energy bins E_j = E_0 + j dE, E_j <= e_max.

    ``kT`` is in energy units.  Bins with E below a level's energy are not
    accessible from that level.
    """

    kT: float
    e_max: float
    dE: float
    levels: tuple[tuple[int, float], ...]
    e0: float | None = None
    hbar: float = 1.0

    def __post_init__(self):
        if self.kT <= 0:
            raise ValueError("temperature must be positive")
        if self.dE <= 0:
            raise ValueError("dE must be positive")
        if not self.levels:
            raise ValueError("level list is empty")
        object.__setattr__(self, "levels", tuple((int(z), float(e)) for z, e in self.levels))

    @property
    def partition(self) -> float:
        e_ref = min(e for _, e in self.levels)
        return float(sum(math.exp(-(e - e_ref) / self.kT) for _, e in self.levels))

    def energies(self) -> np.ndarray:
        start = self.e0 if self.e0 is not None else min(e for _, e in self.levels)
        count = int(math.floor((self.e_max - start) / self.dE + 1e-9)) + 1
        if count < 1:
            raise ValueError("e_max is below the lowest level")
        return start + self.dE * np.arange(count)

    def bins(self) -> list[tuple[int, float, float]]:
        """(zeta, E, Gamma^2) for every accessible bin; Gamma^2 uses energies relative to the lowest level."""
        e_ref = min(e for _, e in self.levels)
        Q = self.partition
        out = []
        for z, ez in self.levels:
            for E in self.energies():
                if E + 1e-12 < ez:
                    continue
                g2 = math.exp(-(E - e_ref) / self.kT) * self.dE / (2 * math.pi * self.hbar * Q)
                out.append((z, float(E), g2))
        if not out:
            raise ValueError("no accessible (zeta, E) bins")
        return out

    def normalization(self) -> float:
        """C^2 such that sum C^2 Gamma^2 = 1."""
        return 1.0 / sum(g for _, _, g in self.bins())


@dataclass(frozen=True)
class ThermalSample:
    zeta: int
    energy: float
    kinetic: float
    weight: float  # C^2 Gamma^2 of the bin


def thermal_sample(spec: ThermalSpec, seed, count: int) -> list[ThermalSample]:
    """Draw (zeta, E) bins with probability C^2 Gamma^2 (deterministic per seed)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    bins = spec.bins()
    w = np.array([g for _, _, g in bins])
    w = w / w.sum()
    level_e = dict(spec.levels)
    idx = np.random.default_rng(seed).choice(len(bins), size=count, p=w)
    return [ThermalSample(bins[i][0], bins[i][1], bins[i][1] - level_e[bins[i][0]], float(w[i])) for i in idx]


def incoming_packet(kinetic: float, mass: float, grid: GridSpec, center: float, sigma: float,
                    direction: int = 1) -> GridWavefunction:
    """1D Gaussian whose mean kinetic energy is ``kinetic``.

    <p^2> = p0^2 + 1/(4 sigma^2), so p0 = sqrt(2 M E_k - 1/(4 sigma^2)).
    """
    p0sq = 2 * mass * kinetic - 1 / (4 * sigma * sigma)
    if p0sq < 0:
        raise ValueError(f"kinetic energy {kinetic} is below the packet's zero-point spread")
    return gaussian_packet(WavepacketSpec((center,), (direction * math.sqrt(p0sq),), (sigma,)), grid)
