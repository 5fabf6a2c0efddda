"""Uniform-grid wavefunctions and the classical split-operator propagator.

Amplitudes are stored flat in C order over the axes (axis 0 most
significant).  Along each axis the integer index is the value of that
axis's position register, so the least-significant qubit is the finest
position bit.  Boundaries are periodic.
"""
from __future__ import annotations

import csv
import math
import struct
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    n: int
    d: int = 1
    extent: tuple[tuple[float, float], ...] = ((-1.0, 1.0),)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit per axis")
        if self.d < 1:
            raise ValueError("need at least one axis")
        ext = tuple((float(lo), float(hi)) for lo, hi in self.extent)
        if len(ext) == 1 and self.d > 1:
            ext = ext * self.d
        if len(ext) != self.d:
            raise ValueError(f"extent has {len(ext)} axes, grid has {self.d}")
        for lo, hi in ext:
            if not hi > lo:
                raise ValueError(f"empty axis extent [{lo}, {hi})")
        object.__setattr__(self, "extent", ext)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def n_points(self) -> int:
        return self.N ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def dx(self) -> np.ndarray:
        return np.array([(hi - lo) / self.N for lo, hi in self.extent])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def axis(self, i: int) -> np.ndarray:
        lo, _ = self.extent[i]
        return lo + self.dx[i] * np.arange(self.N)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(i) for i in range(self.d)], indexing="ij")

    def momenta(self, i: int) -> np.ndarray:
        return momentum_axis(self.N, float(self.dx[i]))

    def momentum_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.momenta(i) for i in range(self.d)], indexing="ij")

    def coordinate(self, flat_index: int) -> np.ndarray:
        idx = np.unravel_index(flat_index, self.shape)
        return np.array([self.axis(i)[k] for i, k in enumerate(idx)])


def momentum_axis(N: int, dx: float) -> np.ndarray:
    """Signed momentum for frequency index k: wraparound, Nyquist negative."""
    k = np.arange(N)
    signed = np.where(k < N // 2, k, k - N)
    return 2 * np.pi * signed / (N * dx)


class GridWavefunction:
    """Immutable complex amplitudes on a :class:`GridSpec`."""

    __slots__ = ("spec", "amplitudes")

    def __init__(self, spec: GridSpec, amplitudes):
        a = np.array(amplitudes, dtype=complex).reshape(-1)
        if a.size != spec.n_points:
            raise ValueError(f"expected {spec.n_points} amplitudes, got {a.size}")
        a.flags.writeable = False
        self.spec = spec
        self.amplitudes = a

    @property
    def psi(self) -> np.ndarray:
        return self.amplitudes.reshape(self.spec.shape)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def with_amplitudes(self, a) -> "GridWavefunction":
        return GridWavefunction(self.spec, a)

    def __repr__(self) -> str:
        return f"GridWavefunction(n={self.spec.n}, d={self.spec.d}, norm={self.norm():.12f})"


def normalized(spec: GridSpec, values) -> GridWavefunction:
    values = np.asarray(values, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(values)
    if not np.isfinite(nrm):
        raise ValueError("wavefunction samples are not finite")
    if nrm == 0:
        raise ValueError("cannot normalize an all-zero wavefunction")
    return GridWavefunction(spec, values / nrm)


def init_wavefunction(spec: GridSpec, sampler: Callable[..., np.ndarray]) -> GridWavefunction:
    """Sample ``sampler(*coords)`` on the grid (broadcasting) and normalize."""
    vals = np.broadcast_to(np.asarray(sampler(*spec.mesh()), dtype=complex), spec.shape)
    return normalized(spec, vals)


def potential_on_grid(spec: GridSpec, V) -> np.ndarray:
    if callable(V):
        vals = np.broadcast_to(np.asarray(V(*spec.mesh()), dtype=float), spec.shape)
    else:
        vals = np.asarray(V, dtype=float)
        vals = np.broadcast_to(vals, spec.shape) if vals.ndim == 0 else vals.reshape(spec.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential is not finite on the grid")
    return np.array(vals)


def kinetic_on_grid(spec: GridSpec, masses) -> np.ndarray:
    """T(p) = sum_i p_i^2 / 2 M_i on the momentum grid (numpy FFT index order)."""
    masses = np.broadcast_to(np.asarray(masses, dtype=float), (spec.d,))
    if np.any(masses <= 0):
        raise ValueError("masses must be positive")
    pm = spec.momentum_mesh()
    return sum(p ** 2 / (2 * m) for p, m in zip(pm, masses))


def split_step_phases(psi: GridWavefunction, potential_phase: np.ndarray,
                      kinetic_phase: np.ndarray, steps: int = 1) -> GridWavefunction:
    """Repeat ``IFFT . diag(kinetic_phase) . FFT . diag(potential_phase)``.

    Phases are given as real angles; the factor applied is exp(-i angle).
    """
    vphase = np.exp(-1j * np.asarray(potential_phase).reshape(psi.spec.shape))
    tphase = np.exp(-1j * np.asarray(kinetic_phase).reshape(psi.spec.shape))
    axes = tuple(range(psi.spec.d))
    a = psi.psi.copy()
    for _ in range(steps):
        a = np.fft.ifftn(tphase * np.fft.fftn(vphase * a, axes=axes, norm="ortho"), axes=axes, norm="ortho")
    return GridWavefunction(psi.spec, a)


def classical_split_step(psi: GridWavefunction, V, masses, dt: float, steps: int = 1) -> GridWavefunction:
    """First-order split-operator propagation: exp(-iT dt) exp(-iV dt) per step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    spec = psi.spec
    return split_step_phases(psi, potential_on_grid(spec, V) * dt, kinetic_on_grid(spec, masses) * dt, steps)


def exact_propagator(psi: GridWavefunction, V, masses, t: float) -> GridWavefunction:
    """exp(-iHt) on the grid by diagonalizing the discrete Hamiltonian (1D/2D, small grids)."""
    spec = psi.spec
    if spec.n_points > 4096:
        raise ValueError("exact propagation is limited to 4096 grid points")
    eye = np.eye(spec.n_points)
    axes = tuple(range(spec.d))
    tk = kinetic_on_grid(spec, masses)
    cols = np.fft.fftn(eye.reshape((-1,) + spec.shape), axes=tuple(a + 1 for a in axes), norm="ortho")
    cols = np.fft.ifftn(tk[None] * cols, axes=tuple(a + 1 for a in axes), norm="ortho")
    H = cols.reshape(spec.n_points, -1).T + np.diag(potential_on_grid(spec, V).reshape(-1))
    H = 0.5 * (H + H.conj().T)
    w, U = np.linalg.eigh(H)
    out = U @ (np.exp(-1j * w * t) * (U.conj().T @ psi.amplitudes))
    return GridWavefunction(spec, out)


def _check_same(a: GridWavefunction, b: GridWavefunction) -> None:
    if a.spec != b.spec:
        raise ValueError("wavefunctions live on different grids")


def overlap(a: GridWavefunction, b: GridWavefunction) -> complex:
    _check_same(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: GridWavefunction, b: GridWavefunction) -> float:
    return abs(overlap(a, b)) ** 2


def position_expectation(psi: GridWavefunction) -> np.ndarray:
    rho = psi.density()
    return np.array([float(np.sum(rho * x)) for x in psi.spec.mesh()])


def momentum_expectation(psi: GridWavefunction) -> np.ndarray:
    axes = tuple(range(psi.spec.d))
    phi = np.fft.fftn(psi.psi, axes=axes, norm="ortho")
    rho = np.abs(phi) ** 2
    return np.array([float(np.sum(rho * p)) for p in psi.spec.momentum_mesh()])


def momentum_spread(psi: GridWavefunction) -> np.ndarray:
    axes = tuple(range(psi.spec.d))
    rho = np.abs(np.fft.fftn(psi.psi, axes=axes, norm="ortho")) ** 2
    out = []
    for p in psi.spec.momentum_mesh():
        mu = np.sum(rho * p)
        out.append(math.sqrt(max(float(np.sum(rho * p ** 2) - mu ** 2), 0.0)))
    return np.array(out)


def probability_in_box(psi: GridWavefunction, box: Sequence[tuple[float, float]]) -> float:
    """Sum of |a_x|^2 over grid points with lo <= x_i < hi on every axis."""
    if len(box) != psi.spec.d:
        raise ValueError(f"box has {len(box)} axes, grid has {psi.spec.d}")
    inside = np.ones(psi.spec.shape, dtype=bool)
    for x, (lo, hi) in zip(psi.spec.mesh(), box):
        inside &= (x >= lo) & (x < hi)
    return float(np.sum(psi.density()[inside]))


def boundary_probability(psi: GridWavefunction, fraction: float = 1 / 16) -> float:
    """Probability within ``fraction`` of the domain width of any boundary."""
    spec = psi.spec
    near = np.zeros(spec.shape, dtype=bool)
    w = max(1, int(round(spec.N * fraction)))
    for ax in range(spec.d):
        idx = [slice(None)] * spec.d
        idx[ax] = slice(0, w)
        near[tuple(idx)] = True
        idx[ax] = slice(spec.N - w, spec.N)
        near[tuple(idx)] = True
    return float(np.sum(psi.density()[near]))


def warn_if_near_boundary(psi: GridWavefunction, threshold: float = 1e-6) -> float:
    pb = boundary_probability(psi)
    if pb > threshold:
        warnings.warn(f"boundary probability {pb:.2e} exceeds {threshold:.0e}; enlarge the domain",
                      RuntimeWarning, stacklevel=2)
    return pb


# -- snapshot formats ----------------------------------------------------------

def save_csv(psi: GridWavefunction, path) -> None:
    """Columns: index, x_0..x_{d-1}, re, im."""
    spec = psi.spec
    coords = [x.reshape(-1) for x in spec.mesh()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{i}" for i in range(spec.d)] + ["re", "im"])
        for i, a in enumerate(psi.amplitudes):
            w.writerow([i] + [repr(float(c[i])) for c in coords] + [repr(float(a.real)), repr(float(a.imag))])


_HEADER = struct.Struct("<II")


def save_binary(psi: GridWavefunction, path) -> None:
    """8-byte header (uint32 n, uint32 d, little-endian) then float64 (re, im) pairs."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(psi.spec.n, psi.spec.d))
        fh.write(np.ascontiguousarray(psi.amplitudes, dtype="<c16").tobytes())


def load_binary(path, extent=None) -> GridWavefunction:
    with open(path, "rb") as fh:
        n, d = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<c16")
    spec = GridSpec(n, d, extent if extent is not None else ((-1.0, 1.0),) * d)
    return GridWavefunction(spec, data)
