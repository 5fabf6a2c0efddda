"""Observables: region labels, reaction probabilities, rate constants, phase estimation, state-to-state populations."""
from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, GridWavefunction, normalized
from .prep import ThermalSpec, harmonic_eigenstate, thermal_sample
from .qsim import Circuit, CircuitState, RegisterLayout, iqft, load_grid_state

Box = Sequence[tuple[float, float]]


# -- regions -------------------------------------------------------------------

@dataclass
class RegionMap:
    """Labeled regions, each a union of half-open axis-aligned boxes.

    Points covered by no box get ``default``.  Boxes belonging to different
    labels may not overlap.
    """

    regions: dict[int, list[Box]]
    default: int = 0
    names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        items = [(lab, tuple(tuple(map(float, ax)) for ax in box)) for lab, boxes in self.regions.items()
                 for box in boxes]
        for i, (la, a) in enumerate(items):
            if any(lo >= hi for lo, hi in a):
                raise ValueError(f"empty box {a} in region {la}")
            for lb, b in items[i + 1:]:
                if la != lb and len(a) == len(b) and all(max(a0, b0) < min(a1, b1) for (a0, a1), (b0, b1) in zip(a, b)):
                    raise ValueError(f"regions {la} and {lb} overlap")
        if any(lab < 0 for lab in self.labels):
            raise ValueError("labels must be non-negative")

    @property
    def labels(self) -> list[int]:
        return sorted(set(self.regions) | {self.default})

    @property
    def n_label_qubits(self) -> int:
        return max(1, math.ceil(math.log2(max(self.labels) + 1)))

    def label(self, x: Sequence[float]) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        for lab, boxes in self.regions.items():
            for box in boxes:
                if all(lo <= xi < hi for xi, (lo, hi) in zip(x, box)):
                    return lab
        return self.default

    def label_grid(self, grid: GridSpec) -> np.ndarray:
        out = np.full(grid.shape, self.default, dtype=np.int64)
        mesh = grid.mesh()
        for lab, boxes in self.regions.items():
            for box in boxes:
                if len(box) != grid.d:
                    raise ValueError(f"box {box} has {len(box)} axes, grid has {grid.d}")
                inside = np.ones(grid.shape, dtype=bool)
                for x, (lo, hi) in zip(mesh, box):
                    inside &= (x >= lo) & (x < hi)
                out[inside] = lab
        return out.reshape(-1)

    @classmethod
    def split(cls, axis_value: float, d: int = 1, axis: int = 0, below: int = 0, above: int = 1,
              bound: float = 1e300) -> "RegionMap":
        """Two regions separated by the plane x_axis = axis_value (a dividing surface)."""
        box = [(-bound, bound)] * d
        box[axis] = (axis_value, bound)
        return cls({above: [tuple(box)]}, default=below)


def region_label(region_map: RegionMap, x) -> int:
    return region_map.label(x)


def attach_region_register(state: CircuitState, region_map: RegionMap, grid: GridSpec,
                           positions: Sequence[str], label_register: str) -> CircuitState:
    """|x>|y> -> |x>|y XOR R(x)> as one reversible table gate."""
    layout = state.layout
    ctrl: list[int] = []
    for name in reversed(list(positions)):
        ctrl.extend(layout.qubits(name))
    circ = Circuit.on(layout)
    circ.table_xor(ctrl, layout.qubits(label_register), region_map.label_grid(grid).tolist())
    return state.run(circ)


def region_probabilities(psi: GridWavefunction, region_map: RegionMap) -> dict[int, float]:
    labels = region_map.label_grid(psi.spec)
    rho = np.abs(psi.amplitudes) ** 2
    return {lab: float(rho[labels == lab].sum()) for lab in region_map.labels}


@dataclass(frozen=True)
class ReactionEstimate:
    exact: float
    estimate: float
    stderr: float
    shots: int
    seed: int | None

    def as_record(self, scenario_hash: str | None = None) -> dict:
        return {"observable": "reaction_probability", "value": self.estimate, "exact": self.exact,
                "stderr": self.stderr, "shots": self.shots, "seed": self.seed, "scenario_hash": scenario_hash}


def reaction_probability(psi: GridWavefunction, region_map: RegionMap, product_labels: Sequence[int],
                         shots: int = 10_000, seed=None, via_circuit: bool = False) -> ReactionEstimate:
    """Probability of finding the packet in the product region(s).

    ``exact`` is the grid sum; ``estimate`` comes from ``shots`` simulated
    measurements of the label register (through the gate-level labeling
    circuit when ``via_circuit`` is set).
    """
    missing = set(product_labels) - set(region_map.labels)
    if missing:
        raise ValueError(f"product labels {sorted(missing)} are not region labels")
    probs = region_probabilities(psi, region_map)
    exact = float(sum(probs[l] for l in product_labels))
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if via_circuit:
        spec = psi.spec
        pos = [f"x{i}" for i in range(spec.d)]
        layout = RegisterLayout([(p, spec.n) for p in pos] + [("label", region_map.n_label_qubits)], cap=None)
        state = attach_region_register(load_grid_state(psi, layout, pos), region_map, spec, pos, "label")
        counts = state.measure_register("label", shots, seed)
        hits = sum(c for lab, c in counts.items() if lab in set(product_labels))
    else:
        hits = int(np.random.default_rng(seed).binomial(shots, min(max(exact, 0.0), 1.0)))
    est = hits / shots
    return ReactionEstimate(exact, est, math.sqrt(max(est * (1 - est), 0.0) / shots), shots, seed)


def flux_separated(product_history: Sequence[float], tol: float = 1e-6, window: int = 10) -> bool:
    """True when the product probability changed by < tol per snapshot over ``window`` snapshots."""
    h = np.asarray(product_history, dtype=float)
    if h.size < window + 1:
        return False
    return bool(np.all(np.abs(np.diff(h[-(window + 1):])) < tol))


# -- Eckart barrier --------------------------------------------------------------

def eckart_potential(V0: float, alpha: float, x0: float = 0.0) -> Callable:
    # sech^2 underflows to 0 far from the barrier; clip to keep cosh finite
    return lambda x: V0 / np.cosh(np.clip(alpha * (x - x0), -300, 300)) ** 2


def eckart_transmission(E, V0: float, alpha: float, mass: float, hbar: float = 1.0):
    """Exact transmission through V0 sech^2(alpha x) at energy E > 0."""
    E = np.asarray(E, dtype=float)
    k = np.sqrt(2 * mass * np.clip(E, 0, None)) / hbar
    a = 2 * np.pi * k / alpha
    disc = 2 * mass * V0 / (hbar * alpha) ** 2 - 0.25
    if disc >= 0:
        d = np.cosh(2 * np.pi * math.sqrt(disc))
    else:
        d = np.cos(2 * np.pi * math.sqrt(-disc))
    with np.errstate(over="ignore"):
        ca = np.cosh(a)
        T = np.where(np.isfinite(ca), (ca - 1) / (ca + d), 1.0)
    return np.where(E > 0, T, 0.0)


def momentum_averaged_transmission(psi: GridWavefunction, V0: float, alpha: float, mass: float) -> float:
    """Sum over the packet's momentum distribution of T(p^2 / 2M), positive momenta only."""
    rho = np.abs(np.fft.fft(psi.amplitudes, norm="ortho")) ** 2
    p = psi.spec.momenta(0)
    T = eckart_transmission(p ** 2 / (2 * mass), V0, alpha, mass)
    return float(np.sum(rho * np.where(p > 0, T, 0.0)))


# -- rate constants ----------------------------------------------------------------

@dataclass
class RateJob:
    """Thermal ensemble plus a reaction-probability evaluator P_r(zeta, E_kinetic, zeta_level_energy)."""

    thermal: ThermalSpec
    reaction_probability: Callable[[int, float], float]  # (zeta, kinetic energy) -> P_r
    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


@dataclass(frozen=True)
class RateEstimate:
    k: float
    stderr: float
    raw_probability: float  # C^2 k(T), the thermal-ancilla |1> probability
    c2: float
    samples: int
    seed: int
    rejected: int = 0

    def as_record(self, scenario_hash: str | None = None) -> dict:
        return {"observable": "rate_constant", "value": self.k, "stderr": self.stderr,
                "raw_probability": self.raw_probability, "C2": self.c2, "shots": self.samples,
                "seed": self.seed, "rejected": self.rejected, "scenario_hash": scenario_hash}


class _CachedPr:
    def __init__(self, fn):
        self.fn = fn
        self.cache: dict[tuple[int, float], float] = {}

    def __call__(self, zeta, ek):
        key = (zeta, round(ek, 12))
        if key not in self.cache:
            self.cache[key] = float(self.fn(zeta, ek))
        return self.cache[key]


def rate_quadrature(thermal: ThermalSpec, pr: Callable[[int, float], float]) -> float:
    """k(T) = sum over all (zeta, E) bins of P_r Gamma^2 (deterministic)."""
    level_e = dict(thermal.levels)
    return float(sum(pr(z, E - level_e[z]) * g2 for z, E, g2 in thermal.bins()))


def rate_constant(job: RateJob, pr_cache: Callable | None = None) -> RateEstimate:
    """Monte Carlo over thermally sampled states: k = mean(P_r) / C^2.

    Samples whose evaluator raises ``ValueError`` (unpreparable packets)
    are redrawn and counted.
    """
    pr = pr_cache if pr_cache is not None else _CachedPr(job.reaction_probability)
    c2 = job.thermal.normalization()
    rng = np.random.default_rng(job.seed)
    values: list[float] = []
    rejected = 0
    while len(values) < job.samples:
        need = job.samples - len(values)
        batch = thermal_sample(job.thermal, int(rng.integers(2 ** 63)), need)
        for s in batch:
            try:
                values.append(pr(s.zeta, s.kinetic))
            except ValueError:
                rejected += 1
        if rejected > 100 * job.samples:
            raise RuntimeError("too many rejected samples")
    v = np.asarray(values)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return RateEstimate(mean / c2, sd / math.sqrt(v.size) / c2, mean, c2, job.samples, job.seed, rejected)


def mc_convergence(job: RateJob, sample_sizes: Sequence[int], repeats: int, reference: float,
                   pr_cache: Callable | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """RMS error vs sample count over independent repeats; returns (sizes, rms, log-log slope)."""
    pr = pr_cache if pr_cache is not None else _CachedPr(job.reaction_probability)
    seeds = np.random.SeedSequence(job.seed).spawn(len(sample_sizes) * repeats)
    rms = []
    i = 0
    for N in sample_sizes:
        errs = []
        for _ in range(repeats):
            sub = RateJob(job.thermal, job.reaction_probability, int(N), int(seeds[i].generate_state(1)[0]))
            i += 1
            errs.append(rate_constant(sub, pr).k - reference)
        rms.append(math.sqrt(float(np.mean(np.square(errs)))))
    sizes = np.asarray(sample_sizes, dtype=float)
    rms = np.asarray(rms)
    slope = float(np.polyfit(np.log(sizes), np.log(rms), 1)[0])
    return sizes, rms, slope


# -- phase estimation ----------------------------------------------------------------

@dataclass
class PhaseHistogram:
    t: int
    probabilities: np.ndarray
    counts: np.ndarray | None = None

    @property
    def bins(self) -> int:
        return 1 << self.t

    def modal_bin(self) -> int:
        src = self.counts if self.counts is not None else self.probabilities
        return int(np.argmax(src))

    def phase(self, b: int) -> float:
        """Bin b as a fraction of a full turn."""
        return b / self.bins

    def peaks(self, k: int) -> list[int]:
        """The k highest local maxima (cyclic) of the probability distribution."""
        p = self.probabilities
        is_peak = (p >= np.roll(p, 1)) & (p >= np.roll(p, -1))
        idx = np.flatnonzero(is_peak)
        return [int(i) for i in idx[np.argsort(p[idx])[::-1][:k]]]


@dataclass
class PhaseEstimationJob:
    """``unitary`` maps a state vector to U applied to it; the estimated phase is phi with U = exp(2 pi i phi)."""

    unitary: Callable[[np.ndarray], np.ndarray]
    t: int
    shots: int = 0
    seed: int | None = None
    max_t: int = 14

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.t > self.max_t:
            raise ValueError(f"t={self.t} exceeds the readout cap {self.max_t}")


def phase_estimate(job: PhaseEstimationJob, state) -> PhaseHistogram:
    """Readout distribution of textbook phase estimation.

    After Hadamards, controlled U^(2^k) and the inverse QFT, outcome b has
    probability || 2^-t sum_r exp(-2 pi i r b / 2^t) U^r psi ||^2; the
    sum over r is one FFT over the stacked powers.
    """
    vec = state.amplitudes if isinstance(state, GridWavefunction) else np.asarray(state, dtype=complex)
    R = 1 << job.t
    powers = np.empty((R, vec.size), dtype=complex)
    cur = np.array(vec, dtype=complex)
    for r in range(R):
        powers[r] = cur
        cur = job.unitary(cur)
    amp = np.fft.fft(powers, axis=0) / R
    probs = np.sum(np.abs(amp) ** 2, axis=1)
    probs = probs / probs.sum()
    counts = None
    if job.shots:
        counts = np.random.default_rng(job.seed).multinomial(job.shots, probs)
    return PhaseHistogram(job.t, probs, counts)


def phase_estimation_circuit(t: int, theta: float) -> tuple[Circuit, RegisterLayout]:
    """Gate-level phase estimation of the one-qubit U = phase(theta) on |1>."""
    layout = RegisterLayout([("read", t), ("sys", 1)])
    circ = Circuit.on(layout)
    read = layout.qubits("read")
    s = layout.qubits("sys")[0]
    circ.x(s)
    for q in read:
        circ.h(q)
    for k, q in enumerate(read):
        circ.cp(theta * (1 << k), q, s)
    iqft(circ, read)
    return circ, layout


def phase_estimate_gate_level(t: int, theta: float, shots: int = 0, seed=None) -> PhaseHistogram:
    circ, layout = phase_estimation_circuit(t, theta)
    st = CircuitState.basis(layout, {}).run(circ)
    probs = st.probabilities("read")
    counts = np.random.default_rng(seed).multinomial(shots, probs) if shots else None
    return PhaseHistogram(t, probs, counts)


# -- state-to-state ------------------------------------------------------------------

@dataclass(frozen=True)
class LinearMap:
    """Product frame coordinates q = A (x - origin)."""

    A: np.ndarray
    origin: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "LinearMap":
        return cls(np.eye(d), np.zeros(d))

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1] or abs(np.linalg.det(A)) < 1e-12:
            raise ValueError("coordinate map must be square and invertible")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "origin", np.atleast_1d(np.asarray(self.origin, dtype=float)))


def fourier_resample(psi: GridWavefunction, points: np.ndarray) -> np.ndarray:
    """Band-limited interpolation of psi at arbitrary points (npts, d)."""
    spec = psi.spec
    coef = np.fft.fftn(psi.psi, norm="ortho") / math.sqrt(spec.n_points)
    out = coef
    # contract one axis at a time: E_axis[p, k] = exp(i k_axis (x_p - lo))
    mats = []
    for ax in range(spec.d):
        lo = spec.extent[ax][0]
        kk = spec.momenta(ax)
        mats.append(np.exp(1j * np.outer(points[:, ax] - lo, kk)))
    if spec.d == 1:
        return mats[0] @ out
    val = np.einsum("pk,k...->p...", mats[0], out)
    for ax in range(1, spec.d):
        val = np.einsum("pk,pk...->p...", mats[ax], val)
    return val


def transform_state(psi: GridWavefunction, cmap: LinearMap, target: GridSpec) -> tuple[GridWavefunction, float]:
    """psi'(q) = |det A|^{-1/2} psi(A^{-1} q + origin) sampled on ``target``.

    Returns the normalized state and the norm lost (support mapped outside the target grid).
    """
    q = np.stack([m.reshape(-1) for m in target.mesh()], axis=1)
    x = q @ np.linalg.inv(cmap.A).T + cmap.origin
    vals = fourier_resample(psi, x) / math.sqrt(abs(np.linalg.det(cmap.A)))
    scale = math.sqrt(target.cell_volume / psi.spec.cell_volume)
    vals = vals * scale
    norm = float(np.vdot(vals, vals).real)
    return normalized(target, vals), abs(1.0 - norm)


@dataclass(frozen=True)
class HarmonicWell:
    omega: float
    mass: float = 1.0
    center: float = 0.0


@dataclass(frozen=True)
class StateToState:
    populations: dict[int, float]
    residual: float
    map_norm_loss: float
    flagged: bool

    def total(self) -> float:
        return float(sum(self.populations.values()) + self.residual)


def eigenbasis(well: HarmonicWell, grid: GridSpec, vmax: int) -> np.ndarray:
    """Grid-orthonormalized eigenvectors v = 0..vmax as columns (QR keeps the span and signs)."""
    raw = np.stack([harmonic_eigenstate(v, well.omega, well.mass, grid, well.center).amplitudes
                    for v in range(vmax + 1)], axis=1)
    q, r = np.linalg.qr(raw)
    return q * np.sign(np.real(np.diag(r)))


def state_to_state(state, well: HarmonicWell, vmax: int, cmap: LinearMap | None = None,
                   target: GridSpec | None = None, residual_threshold: float = 1e-3) -> StateToState:
    """Vibrational populations P_v = |<xi_v|psi>|^2 in the product frame.

    ``state`` is a GridWavefunction or an ensemble [(weight, GridWavefunction)];
    ensemble populations are weight averages.  The residual is the norm
    outside the span of the basis, so sum P + residual = 1.
    """
    ensemble = [(1.0, state)] if isinstance(state, GridWavefunction) else list(state)
    wsum = sum(w for w, _ in ensemble)
    if wsum <= 0 or any(w < 0 for w, _ in ensemble):
        raise ValueError("ensemble weights must be non-negative with a positive sum")
    pops = np.zeros(vmax + 1)
    resid = 0.0
    loss = 0.0
    basis = None
    for w, psi in ensemble:
        if cmap is not None:
            psi, lost = transform_state(psi, cmap, target or psi.spec)
            loss = max(loss, lost)
        if basis is None:
            basis = eigenbasis(well, psi.spec, vmax)
        a = psi.amplitudes / math.sqrt(psi.norm())
        alpha = basis.conj().T @ a
        rest = a - basis @ alpha
        pops += (w / wsum) * np.abs(alpha) ** 2
        resid += (w / wsum) * float(np.vdot(rest, rest).real)
    return StateToState({v: float(p) for v, p in enumerate(pops)}, resid, loss, resid > residual_threshold)


def closest_name(name: str, options: Sequence[str]) -> str | None:
    m = difflib.get_close_matches(name, list(options), n=1, cutoff=0.0)
    return m[0] if m else None
