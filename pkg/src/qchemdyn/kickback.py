"""Split-operator dynamics by phase kickback through a Fourier-state ancilla.

One time step is::

    V oracle adds V[x] into the ancilla      (phase exp(-2 pi i V[x] / M))
    inverse QFT on each position register    (to momentum, numpy FFT order)
    T oracle adds T[k] into the ancilla
    QFT on each position register            (back to position)

The ancilla starts as ``QFT |1>`` = sum_y exp(2 pi i y / M)|y> / sqrt(M),
an eigenstate of modular addition, so it factors out after every oracle.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import arith, oracle
from .grid import (GridSpec, GridWavefunction, fidelity, kinetic_on_grid, potential_on_grid,
                   split_step_phases)
from .qsim import (DEFAULT_QUBIT_CAP, Circuit, CircuitState, GateTally, QubitCapError, RegisterLayout,
                   extract_grid_state, iqft, load_grid_state, qft, schmidt_split)

ANCILLA = "anc"


def prepare_kickback_ancilla(circ: Circuit, anc: Sequence[int]) -> Circuit:
    """|0> -> QFT|1>; adding q afterwards multiplies the state by exp(-2 pi i q / M)."""
    circ.x(anc[0])
    return qft(circ, anc)


def ancilla_circuit(m: int) -> Circuit:
    if m < 1:
        raise ValueError("m must be >= 1")
    return prepare_kickback_ancilla(Circuit(m), list(range(m)))


def ancilla_vector(m: int) -> np.ndarray:
    M = 1 << m
    return np.exp(2j * np.pi * np.arange(M) / M) / math.sqrt(M)


# -- quantization --------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedTable:
    """Integer phase table: the step phase at point x is 2 pi table[x] / M."""

    table: np.ndarray
    m: int
    v_min: float
    scale: float  # counts per energy unit
    wrapped: bool = False

    @property
    def M(self) -> int:
        return 1 << self.m

    @property
    def max_phase_error(self) -> float:
        return math.pi / self.M

    @property
    def dt(self) -> float:
        """Physical step implied by the scale (phase = V dt)."""
        return 2 * math.pi * self.scale / self.M

    def phases(self) -> np.ndarray:
        return 2 * np.pi * self.table / self.M


def _quantize(values: np.ndarray, m: int, scale: float | None, offset: float | None = None) -> QuantizedTable:
    values = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise ValueError("values are not finite")
    M = 1 << m
    vmin = float(values.min()) if offset is None else float(offset)
    span = float(values.max()) - vmin
    if scale is None:
        scale = (M - 1) / span if span > 0 else 0.0
        table = np.clip(np.rint((values - vmin) * scale), 0, M - 1).astype(np.int64)
        return QuantizedTable(table, m, vmin, scale, False)
    raw = np.rint((values - vmin) * scale).astype(np.int64)
    wrapped = bool(np.any(raw >= M))
    return QuantizedTable(raw % M, m, vmin, float(scale), wrapped)


def quantize_potential(V, grid: GridSpec, m: int, scale: float | None = None) -> QuantizedTable:
    """table[x] = round((V(x) - V_min) * s).

    With ``scale=None`` the maximum maps to M - 1 (and values are clamped);
    with an explicit scale (usually dt M / 2 pi) values past M - 1 wrap,
    which leaves the phase unchanged.
    """
    return _quantize(potential_on_grid(grid, V), m, scale)


def quantize_kinetic(grid: GridSpec, masses, m: int, scale: float) -> QuantizedTable:
    """Kinetic table in FFT index order; T(0) = 0 so no offset is needed."""
    return _quantize(kinetic_on_grid(grid, masses), m, scale, offset=0.0)


def scale_for_dt(dt: float, m: int) -> float:
    return dt * (1 << m) / (2 * math.pi)


# -- oracle sources --------------------------------------------------------------

class PhaseSource(Protocol):
    def scratch(self, grid: GridSpec) -> list[tuple[str, int]]: ...

    def table(self, grid: GridSpec, m: int) -> np.ndarray: ...

    def emit(self, b: arith.CircuitBuilder, positions: list[str], anc: str) -> None: ...


def _flat_qubits(b: arith.CircuitBuilder, positions: list[str]) -> list[int]:
    # flat grid index is C order (axis 0 most significant); controls go LSB first
    out: list[int] = []
    for name in reversed(positions):
        out.extend(b.q(name))
    return out


@dataclass
class TableSource:
    """Precomputed integer table, applied as one reversible table-add gate."""

    values: np.ndarray

    def scratch(self, grid):
        return []

    def table(self, grid, m):
        t = np.asarray(self.values, dtype=np.int64).reshape(-1)
        if t.size != grid.n_points:
            raise ValueError(f"table has {t.size} entries, grid has {grid.n_points}")
        return t % (1 << m)

    def emit(self, b, positions, anc):
        b.circ.table_add(_flat_qubits(b, positions), b.q(anc), [int(v) for v in self.values.reshape(-1)])


@dataclass
class QuadraticSource:
    """sum_axis K_axis |z_axis - c_axis|^2 evaluated with Fourier arithmetic.

    ``K`` are integer numerators over 2^k_shift; the table follows the
    circuit's bit-pair truncation exactly.  Used for harmonic wells
    (centers at the well minimum) and for p^2 kinetic terms (centers 0).
    """

    K: Sequence[int]
    k_shift: int = 0
    centers: Sequence[int] | None = None

    def _centers(self, d):
        return list(self.centers) if self.centers is not None else [0] * d

    def scratch(self, grid):
        return [("qsgn", 1)]

    def table(self, grid, m):
        d, n = grid.d, grid.n
        if len(self.K) != d:
            raise ValueError(f"need {d} coefficients, got {len(self.K)}")
        cs = self._centers(d)
        per_axis = [np.array([oracle.quadratic(z, int(k), self.k_shift, n, m, c) for z in range(grid.N)])
                    for k, c in zip(self.K, cs)]
        total = np.zeros(grid.shape, dtype=np.int64)
        for ax, vals in enumerate(per_axis):
            shape = [1] * d
            shape[ax] = grid.N
            total = total + vals.reshape(shape)
        return (total % (1 << m)).reshape(-1)

    def emit(self, b, positions, anc):
        cs = self._centers(len(positions))
        sq = b.q("qsgn")[0]
        for name, k, c in zip(positions, self.K, cs):
            arith.quadratic_accumulate(b.circ, b.q(name), sq, b.q(anc), int(k), self.k_shift, int(c))

    @classmethod
    def from_coefficient(cls, coeff: Sequence[float], k_shift: int = 12, centers=None):
        """Coefficients in counts per index^2."""
        return cls([int(round(c * (1 << k_shift))) for c in coeff], k_shift, centers)


@dataclass
class CoulombSource:
    """Pairwise Coulomb energy of 1D particles, one grid axis per particle.

    Position registers double as the m-bit arithmetic operands, so the grid
    needs n == fmt.m; the ancilla width sets the accumulator width.
    """

    fmt: arith.CoulombFormat
    charges: Sequence[float]

    def scratch(self, grid):
        if grid.n != self.fmt.m:
            raise ValueError("Coulomb oracle needs grid qubits n equal to its precision m")
        if grid.d != len(self.charges):
            raise ValueError("one grid axis per particle")
        return arith.coulomb_scratch(self.fmt, 1)

    def table(self, grid, m):
        kappas = arith.coulomb_kappas(self.fmt, self.charges)
        idx = np.indices(grid.shape).reshape(grid.d, -1).T
        return np.array([oracle.coulomb([[int(v)] for v in row], kappas, self.fmt.m, self.fmt.guard,
                                        self.fmt.r_shift, m) for row in idx], dtype=np.int64)

    def emit(self, b, positions, anc):
        arith.emit_coulomb(b, self.fmt, self.charges, [[p] for p in positions], anc)


# -- plan and circuits -----------------------------------------------------------

@dataclass
class KickbackPlan:
    grid: GridSpec
    m: int
    potential: PhaseSource | None
    kinetic: PhaseSource | None = None
    steps: int = 1
    dt: float | None = None
    v_min: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")

    @property
    def M(self) -> int:
        return 1 << self.m

    @property
    def positions(self) -> list[str]:
        return [f"x{i}" for i in range(self.grid.d)]

    def layout(self, cap: int | None = None) -> RegisterLayout:
        regs = [(p, self.grid.n) for p in self.positions] + [(ANCILLA, self.m)]
        sizes: dict[str, int] = {}
        for src in (self.potential, self.kinetic):
            if src is None:
                continue
            for name, size in src.scratch(self.grid):
                sizes[name] = max(size, sizes.get(name, 0))
        regs += list(sizes.items())
        return RegisterLayout(regs, cap=cap)

    def v_table(self) -> np.ndarray:
        if self.potential is None:
            return np.zeros(self.grid.n_points, dtype=np.int64)
        return self.potential.table(self.grid, self.m)

    def t_table(self) -> np.ndarray:
        if self.kinetic is None:
            return np.zeros(self.grid.n_points, dtype=np.int64)
        return self.kinetic.table(self.grid, self.m)


def step_circuit(plan: KickbackPlan, layout: RegisterLayout | None = None) -> arith.ArithmeticCircuit:
    layout = layout or plan.layout(cap=None)
    b = arith.CircuitBuilder("kickback-step", plan.m, layout)
    pos = plan.positions
    if plan.potential is not None:
        with b.section("V"):
            plan.potential.emit(b, pos, ANCILLA)
    with b.section("to_momentum"):
        for p in pos:
            iqft(b.circ, b.q(p))
    if plan.kinetic is not None:
        with b.section("T"):
            plan.kinetic.emit(b, pos, ANCILLA)
    with b.section("to_position"):
        for p in pos:
            qft(b.circ, b.q(p))
    return b.done()


def classical_oracle(plan: KickbackPlan, psi0: GridWavefunction, steps: int | None = None) -> GridWavefunction:
    """Grid propagation with exactly the integer tables the circuit uses."""
    steps = plan.steps if steps is None else steps
    M = plan.M
    return split_step_phases(psi0, 2 * np.pi * plan.v_table() / M, 2 * np.pi * plan.t_table() / M, steps)


def exact_phase_reference(plan: KickbackPlan, psi0: GridWavefunction, V, masses, steps: int | None = None):
    """Split-operator propagation with the unquantized V and T at the plan's dt."""
    if plan.dt is None:
        raise ValueError("plan has no physical time step")
    steps = plan.steps if steps is None else steps
    from .grid import classical_split_step

    return classical_split_step(psi0, V, masses, plan.dt, steps)


def resource_report(plan: KickbackPlan) -> dict:
    layout = plan.layout(cap=None)
    t = step_circuit(plan, layout).tally()
    return {
        "qubits_required": layout.n_qubits,
        "registers": {r.name: r.size for r in layout.registers},
        "gates_per_step": t.as_dict(),
        "rotation_class_per_step": t.rotation_class,
        "steps": plan.steps,
        "rotation_class_total": t.rotation_class * plan.steps,
    }


class ResourceCapError(QubitCapError):
    def __init__(self, report: dict, cap: int):
        super().__init__(f"plan needs {report['qubits_required']} qubits, cap is {cap}")
        self.report = report
        self.cap = cap


@dataclass
class Trajectory:
    plan: KickbackPlan
    snapshots: list[tuple[int, GridWavefunction]]
    oracle_snapshots: list[tuple[int, GridWavefunction]]
    separability: list[float]
    tally_per_step: GateTally

    @property
    def final(self) -> GridWavefunction:
        return self.snapshots[-1][1]

    @property
    def fidelities(self) -> list[float]:
        return [fidelity(a, b) for (_, a), (_, b) in zip(self.snapshots, self.oracle_snapshots)]

    @property
    def final_fidelity(self) -> float:
        return self.fidelities[-1]

    @property
    def max_separability_deviation(self) -> float:
        return max(self.separability) if self.separability else 0.0

    def manifest(self) -> dict:
        p = self.plan
        return {
            "grid": {"n": p.grid.n, "d": p.grid.d, "extent": [list(e) for e in p.grid.extent]},
            "m": p.m,
            "steps": p.steps,
            "dt": p.dt,
            "v_min": p.v_min,
            "potential_source": type(p.potential).__name__ if p.potential is not None else None,
            "kinetic_source": type(p.kinetic).__name__ if p.kinetic is not None else None,
            "snapshot_steps": [s for s, _ in self.snapshots],
            "fidelity_vs_oracle": self.fidelities,
            "final_fidelity": self.final_fidelity,
            "max_separability_deviation": self.max_separability_deviation,
            "gates_per_step": self.tally_per_step.as_dict(),
            "meta": p.meta,
        }

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)


def evolve(plan: KickbackPlan, psi0: GridWavefunction, snapshot_every: int | None = None,
           qubit_cap: int | None = DEFAULT_QUBIT_CAP, separability_tol: float = 1e-8) -> Trajectory:
    """Run the gate-level kickback circuit for ``plan.steps`` steps.

    Snapshots (every ``snapshot_every`` steps and at the end) are extracted
    from the position registers after checking that the ancillas factor
    out; each is paired with the classical oracle at the same step.
    """
    if psi0.spec != plan.grid:
        raise ValueError("initial state lives on a different grid")
    layout = plan.layout(cap=None)
    if qubit_cap is not None and layout.n_qubits > qubit_cap:
        raise ResourceCapError(resource_report(plan), qubit_cap)
    step = step_circuit(plan, layout)
    state = load_grid_state(psi0, layout, plan.positions)
    prep = Circuit.on(layout)
    prepare_kickback_ancilla(prep, layout.qubits(ANCILLA))
    state.run(prep)

    M = plan.M
    vph = 2 * np.pi * plan.v_table() / M
    tph = 2 * np.pi * plan.t_table() / M
    ref = psi0
    snaps: list[tuple[int, GridWavefunction]] = []
    refs: list[tuple[int, GridWavefunction]] = []
    seps: list[float] = []
    every = snapshot_every or plan.steps or 1
    for k in range(1, plan.steps + 1):
        state.run(step.circuit)
        ref = split_step_phases(ref, vph, tph, 1)
        _, _, dev = schmidt_split(state, plan.positions)
        seps.append(dev)
        if dev > separability_tol:
            extract_grid_state(state, plan.grid, plan.positions, tol=separability_tol)
        if k % every == 0 or k == plan.steps:
            snaps.append((k, extract_grid_state(state, plan.grid, plan.positions, tol=separability_tol)))
            refs.append((k, ref))
    if plan.steps == 0:
        snaps.append((0, extract_grid_state(state, plan.grid, plan.positions, tol=separability_tol)))
        refs.append((0, psi0))
    return Trajectory(plan, snaps, refs, seps, step.circuit.tally())


def kickback_phase_check(table: np.ndarray, grid: GridSpec, m: int, psi: GridWavefunction) -> tuple[float, float]:
    """Apply only the V kickback; compare with direct diagonal phases.

    Returns (max elementwise deviation, Schmidt deviation of the ancilla).
    """
    plan = KickbackPlan(grid, m, TableSource(np.asarray(table)), None, steps=0)
    layout = plan.layout(cap=None)
    b = arith.CircuitBuilder("kick", m, layout)
    prepare_kickback_ancilla(b.circ, b.q(ANCILLA))
    plan.potential.emit(b, plan.positions, ANCILLA)
    state = load_grid_state(psi, layout, plan.positions)
    state.run(b.circ)
    pos, _, dev = schmidt_split(state, plan.positions)
    expected = psi.amplitudes * np.exp(-2j * np.pi * np.asarray(table).reshape(-1) / (1 << m))
    return float(np.max(np.abs(pos - expected))), dev


# -- physical plans --------------------------------------------------------------

def physical_plan(grid: GridSpec, V, masses, m: int, steps: int, dt: float | None = None,
                  kinetic: bool = True, meta: dict | None = None) -> KickbackPlan:
    """Table-mode plan from a physical potential.

    Without ``dt`` the potential's range is mapped onto [0, M - 1] and the
    step follows from that scale (dt = 2 pi s / M); the kinetic table uses
    the same scale.
    """
    qv = quantize_potential(V, grid, m, None if dt is None else scale_for_dt(dt, m))
    s = qv.scale
    if s == 0:
        if dt is None:
            raise ValueError("constant potential: give dt explicitly")
        s = scale_for_dt(dt, m)
    dt_eff = 2 * math.pi * s / (1 << m)
    src_t = TableSource(quantize_kinetic(grid, masses, m, s).table) if kinetic else None
    info = {"scale": s, "v_wrapped": qv.wrapped, "max_phase_error_per_step": qv.max_phase_error}
    info.update(meta or {})
    return KickbackPlan(grid, m, TableSource(qv.table), src_t, steps, dt_eff, qv.v_min, info)
