"""Dense statevector engine for multi-register circuits with gate accounting.

Qubit ``q`` of a layout is bit ``q`` of the basis index (little-endian).
Registers occupy contiguous qubits; the first qubit of a register is its
least-significant bit.  A register holding the integer ``v`` therefore
contributes ``v << offset`` to the basis index.

Besides the dense :class:`CircuitState`, the module provides
:func:`simulate_basis`, a batched simulator for wide reversible-arithmetic
circuits acting on computational-basis inputs.  It keeps every qubit that
is provably in a basis state as a classical bit and only stores a dense
vector over the qubits currently in superposition.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_QUBIT_CAP = 26

SINGLE = ("h", "x", "p", "ry")
ROTATIONS = ("p", "cp", "ccp", "ry")
GATE_ARITY = {"h": 1, "x": 1, "p": 1, "ry": 1, "cx": 2, "cp": 2, "ccp": 3, "swap": 2}
TABLE_GATES = ("tadd", "txor")

# tally classes
CLASS_OF = {
    "h": "single",
    "x": "single",
    "p": "single",
    "ry": "single",
    "cp": "crot",
    "ccp": "ccrot",
    "cx": "cnot",
    "swap": "swap",
    "tadd": "oracle",
    "txor": "oracle",
}
CCROT_COST = 5  # two CNOTs and three controlled rotations


class QubitCapError(ValueError):
    """Raised when a layout would exceed the configured qubit cap."""


class SeparabilityError(RuntimeError):
    """Raised when ancilla registers are entangled with the position registers."""


@dataclass(frozen=True)
class Register:
    name: str
    size: int
    offset: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(range(self.offset, self.offset + self.size))


class RegisterLayout:
    """Ordered named registers with contiguous qubit ranges."""

    def __init__(self, registers: Sequence[tuple[str, int]], cap: int | None = DEFAULT_QUBIT_CAP):
        regs = []
        offset = 0
        seen = set()
        for name, size in registers:
            if name in seen:
                raise ValueError(f"duplicate register name {name!r}")
            if size < 1:
                raise ValueError(f"register {name!r} must have at least one qubit")
            seen.add(name)
            regs.append(Register(name, int(size), offset))
            offset += int(size)
        if cap is not None and offset > cap:
            raise QubitCapError(f"layout needs {offset} qubits, cap is {cap}")
        self.registers: tuple[Register, ...] = tuple(regs)
        self.cap = cap
        self._by_name = {r.name: r for r in regs}

    @property
    def n_qubits(self) -> int:
        return sum(r.size for r in self.registers)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.registers]

    def __getitem__(self, name: str) -> Register:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown register {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def qubits(self, name: str) -> tuple[int, ...]:
        return self[name].qubits

    def index_of(self, values: dict[str, int]) -> int:
        """Basis index for the given register values (missing registers are 0)."""
        idx = 0
        for name, v in values.items():
            r = self[name]
            if not 0 <= v < (1 << r.size):
                raise ValueError(f"value {v} does not fit register {name!r}")
            idx |= int(v) << r.offset
        return idx

    def value_of(self, index, name: str):
        r = self[name]
        return (index >> r.offset) & ((1 << r.size) - 1)

    def __repr__(self) -> str:
        inner = ", ".join(f"{r.name}:{r.size}" for r in self.registers)
        return f"RegisterLayout({inner})"


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    angle: float = 0.0
    # table gates: qubits = controls + targets, n_ctrl splits them
    table: tuple[int, ...] | None = None
    n_ctrl: int = 0

    def inverse(self) -> "Gate":
        if self.name in ROTATIONS:
            return Gate(self.name, self.qubits, -self.angle)
        if self.name == "tadd":
            mod = 1 << (len(self.qubits) - self.n_ctrl)
            return Gate("tadd", self.qubits, table=tuple((-v) % mod for v in self.table), n_ctrl=self.n_ctrl)
        return self


@dataclass
class GateTally:
    """Elementary-gate counts by class.

    ``rotation_class`` is the figure compared against closed-form cost
    formulas: controlled rotations and CNOTs count 1, doubly-controlled
    rotations count 5.  Single-qubit gates and QFT bit-reversal swaps are
    kept separately and excluded from it.
    """

    counts: Counter = field(default_factory=Counter)

    def add(self, gate: Gate, times: int = 1) -> None:
        self.counts[CLASS_OF[gate.name]] += times

    def __add__(self, other: "GateTally") -> "GateTally":
        return GateTally(self.counts + other.counts)

    def __getitem__(self, cls: str) -> int:
        return self.counts.get(cls, 0)

    @property
    def single(self) -> int:
        return self["single"]

    @property
    def crot(self) -> int:
        return self["crot"]

    @property
    def ccrot(self) -> int:
        return self["ccrot"]

    @property
    def cnot(self) -> int:
        return self["cnot"]

    @property
    def swap(self) -> int:
        return self["swap"]

    @property
    def oracle(self) -> int:
        return self["oracle"]

    @property
    def rotation_class(self) -> int:
        return self.crot + self.cnot + CCROT_COST * self.ccrot

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict[str, int]:
        out = {k: self[k] for k in ("single", "crot", "ccrot", "cnot", "swap", "oracle")}
        out["rotation_class"] = self.rotation_class
        out["total"] = self.total
        return out


class Circuit:
    """A flat gate list over ``n_qubits`` qubits."""

    def __init__(self, n_qubits: int, layout: RegisterLayout | None = None):
        self.n_qubits = int(n_qubits)
        self.layout = layout
        self.gates: list[Gate] = []

    @classmethod
    def on(cls, layout: RegisterLayout) -> "Circuit":
        return cls(layout.n_qubits, layout)

    def _check(self, qubits: Sequence[int]) -> None:
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"duplicate qubits in {tuple(qubits)}")
        for q in qubits:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} out of range for {self.n_qubits}-qubit circuit")

    def append(self, gate: Gate) -> "Circuit":
        if gate.name not in CLASS_OF:
            raise ValueError(f"unknown gate {gate.name!r}")
        if gate.name in GATE_ARITY and len(gate.qubits) != GATE_ARITY[gate.name]:
            raise ValueError(f"gate {gate.name} takes {GATE_ARITY[gate.name]} qubits")
        self._check(gate.qubits)
        self.gates.append(gate)
        return self

    def h(self, q: int):
        return self.append(Gate("h", (q,)))

    def x(self, q: int):
        return self.append(Gate("x", (q,)))

    def ry(self, theta: float, q: int):
        """exp(-i theta Y / 2): |0> -> cos(theta/2)|0> + sin(theta/2)|1>."""
        return self.append(Gate("ry", (q,), float(theta)))

    def p(self, theta: float, q: int):
        return self.append(Gate("p", (q,), float(theta)))

    def cx(self, c: int, t: int):
        return self.append(Gate("cx", (c, t)))

    def cp(self, theta: float, c: int, t: int):
        return self.append(Gate("cp", (c, t), float(theta)))

    def ccp(self, theta: float, c1: int, c2: int, t: int):
        return self.append(Gate("ccp", (c1, c2, t), float(theta)))

    def swap(self, a: int, b: int):
        return self.append(Gate("swap", (a, b)))

    def table_add(self, controls: Sequence[int], targets: Sequence[int], table: Sequence[int]):
        """Oracle ``|c, t> -> |c, (t + table[c]) mod 2^len(t)>``."""
        table = _check_table(table, len(controls), len(targets))
        return self.append(Gate("tadd", tuple(controls) + tuple(targets), table=table, n_ctrl=len(controls)))

    def table_xor(self, controls: Sequence[int], targets: Sequence[int], table: Sequence[int]):
        """Oracle ``|c, t> -> |c, t XOR table[c]>``."""
        table = _check_table(table, len(controls), len(targets))
        return self.append(Gate("txor", tuple(controls) + tuple(targets), table=table, n_ctrl=len(controls)))

    def extend(self, other: "Circuit") -> "Circuit":
        if other.n_qubits > self.n_qubits:
            raise ValueError("cannot extend with a wider circuit")
        self.gates.extend(other.gates)
        return self

    def inverse(self) -> "Circuit":
        inv = Circuit(self.n_qubits, self.layout)
        inv.gates = [g.inverse() for g in reversed(self.gates)]
        return inv

    def tally(self) -> GateTally:
        t = GateTally()
        for g in self.gates:
            t.add(g)
        return t

    def __len__(self) -> int:
        return len(self.gates)

    # line-oriented text format: "name q0,q1[,...] [angle]"; table gates carry
    # "n_ctrl=<k> table=<v0,v1,...>" instead of an angle
    def to_text(self) -> str:
        lines = [f"qubits {self.n_qubits}"]
        for g in self.gates:
            qs = ",".join(str(q) for q in g.qubits)
            if g.name in TABLE_GATES:
                vals = ",".join(str(v) for v in g.table)
                lines.append(f"{g.name} {qs} n_ctrl={g.n_ctrl} table={vals}")
            elif g.name in ROTATIONS:
                lines.append(f"{g.name} {qs} {g.angle!r}")
            else:
                lines.append(f"{g.name} {qs}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        head = lines[0].split()
        if head[0] != "qubits":
            raise ValueError("circuit text must start with 'qubits <n>'")
        circ = cls(int(head[1]))
        for ln in lines[1:]:
            parts = ln.split()
            name, qs = parts[0], tuple(int(q) for q in parts[1].split(","))
            if name in TABLE_GATES:
                kv = dict(p.split("=", 1) for p in parts[2:])
                table = tuple(int(v) for v in kv["table"].split(","))
                circ.append(Gate(name, qs, table=table, n_ctrl=int(kv["n_ctrl"])))
            elif name in ROTATIONS:
                circ.append(Gate(name, qs, float(parts[2])))
            else:
                circ.append(Gate(name, qs))
        return circ


def _check_table(table, n_ctrl: int, n_tgt: int) -> tuple[int, ...]:
    table = tuple(int(v) for v in table)
    if len(table) != 1 << n_ctrl:
        raise ValueError(f"table needs {1 << n_ctrl} entries, got {len(table)}")
    mod = 1 << n_tgt
    return tuple(v % mod for v in table)


# -- QFT ---------------------------------------------------------------------

def qft(circ: Circuit, qubits: Sequence[int], swaps: bool = True) -> Circuit:
    """Append the QFT ``|j> -> sum_y exp(2 pi i j y / 2^k) |y> / sqrt(2^k)``.

    ``qubits`` is LSB first.  Uses k Hadamards, k(k-1)/2 controlled phases
    and floor(k/2) swaps for the bit reversal.
    """
    qs = list(qubits)
    k = len(qs)
    for j in range(k - 1, -1, -1):
        circ.h(qs[j])
        for c in range(j - 1, -1, -1):
            circ.cp(math.pi / (1 << (j - c)), qs[c], qs[j])
    if swaps:
        for i in range(k // 2):
            circ.swap(qs[i], qs[k - 1 - i])
    return circ


def iqft(circ: Circuit, qubits: Sequence[int], swaps: bool = True) -> Circuit:
    tmp = Circuit(circ.n_qubits)
    qft(tmp, qubits, swaps)
    return circ.extend(tmp.inverse())


# -- dense engine ------------------------------------------------------------

class CircuitState:
    """Dense statevector over a register layout, with a running gate tally.

    Gate application mutates the amplitudes in place; one writer per state.
    """

    def __init__(self, layout: RegisterLayout, amplitudes: np.ndarray | None = None):
        self.layout = layout
        q = layout.n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(1 << q, dtype=complex)
            amplitudes[0] = 1.0
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (1 << q,):
            raise ValueError(f"expected {1 << q} amplitudes, got {amplitudes.shape}")
        self.amplitudes = amplitudes
        self.tally = GateTally()

    @classmethod
    def basis(cls, layout: RegisterLayout, values: dict[str, int] | None = None) -> "CircuitState":
        st = cls(layout)
        st.amplitudes[0] = 0.0
        st.amplitudes[layout.index_of(values or {})] = 1.0
        return st

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    def copy(self) -> "CircuitState":
        st = CircuitState(self.layout, self.amplitudes.copy())
        st.tally = GateTally(Counter(self.tally.counts))
        return st

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def _tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def _sl(self, fixed: dict[int, int]) -> tuple:
        Q = self.n_qubits
        sl = [slice(None)] * Q
        for q, b in fixed.items():
            sl[Q - 1 - q] = b
        return tuple(sl)

    def apply_gate(self, name: str, targets: Sequence[int], angle: float = 0.0) -> "CircuitState":
        return self.apply(Gate(name, tuple(targets), float(angle)))

    def apply(self, gate: Gate) -> "CircuitState":
        qs = gate.qubits
        Q = self.n_qubits
        if len(set(qs)) != len(qs) or any(not 0 <= q < Q for q in qs):
            raise ValueError(f"bad targets {qs} for {Q} qubits")
        name = gate.name
        if name in GATE_ARITY and len(qs) != GATE_ARITY[name]:
            raise ValueError(f"gate {name} takes {GATE_ARITY[name]} qubits")
        t = self._tensor()
        if name == "h":
            (q,) = qs
            i0, i1 = self._sl({q: 0}), self._sl({q: 1})
            a0 = t[i0].copy()
            a1 = t[i1]
            t[i0] = (a0 + a1) * _RSQRT2
            t[i1] = (a0 - a1) * _RSQRT2
        elif name == "x":
            (q,) = qs
            i0, i1 = self._sl({q: 0}), self._sl({q: 1})
            a0 = t[i0].copy()
            t[i0] = t[i1]
            t[i1] = a0
        elif name in ("p", "cp", "ccp"):
            t[self._sl({q: 1 for q in qs})] *= np.exp(1j * gate.angle)
        elif name == "ry":
            (q,) = qs
            c, sn = math.cos(gate.angle / 2), math.sin(gate.angle / 2)
            i0, i1 = self._sl({q: 0}), self._sl({q: 1})
            a0 = t[i0].copy()
            a1 = t[i1].copy()
            t[i0] = c * a0 - sn * a1
            t[i1] = sn * a0 + c * a1
        elif name == "cx":
            c, tq = qs
            i0, i1 = self._sl({c: 1, tq: 0}), self._sl({c: 1, tq: 1})
            a0 = t[i0].copy()
            t[i0] = t[i1]
            t[i1] = a0
        elif name == "swap":
            a, b = qs
            i01, i10 = self._sl({a: 0, b: 1}), self._sl({a: 1, b: 0})
            tmp = t[i01].copy()
            t[i01] = t[i10]
            t[i10] = tmp
        elif name in TABLE_GATES:
            self._apply_table(gate)
        else:
            raise ValueError(f"unknown gate {name!r}")
        self.tally.add(gate)
        return self

    def _apply_table(self, gate: Gate) -> None:
        ctrl = gate.qubits[: gate.n_ctrl]
        tgt = gate.qubits[gate.n_ctrl:]
        idx = np.arange(1 << self.n_qubits, dtype=np.int64)
        cval = _gather(idx, ctrl)
        tval = _gather(idx, tgt)
        table = np.asarray(gate.table, dtype=np.int64)
        if gate.name == "tadd":
            new_t = (tval + table[cval]) % (1 << len(tgt))
        else:
            new_t = tval ^ table[cval]
        new_idx = _scatter(idx, tgt, new_t)
        out = np.empty_like(self.amplitudes)
        out[new_idx] = self.amplitudes
        self.amplitudes = out

    def run(self, circuit: Circuit) -> "CircuitState":
        if circuit.n_qubits > self.n_qubits:
            raise ValueError("circuit is wider than the state")
        for g in circuit.gates:
            self.apply(g)
        return self

    def probabilities(self, register: str) -> np.ndarray:
        r = self.layout[register]
        p = np.abs(self.amplitudes) ** 2
        idx = np.arange(p.size, dtype=np.int64)
        vals = (idx >> r.offset) & ((1 << r.size) - 1)
        return np.bincount(vals, weights=p, minlength=1 << r.size)

    def measure_register(self, register: str, shots: int, seed=None) -> dict[int, int]:
        """Sample the marginal distribution of a register; the state is left untouched."""
        if shots < 1:
            raise ValueError("shots must be >= 1")
        probs = self.probabilities(register)
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        rng = np.random.default_rng(seed)
        draws = rng.choice(probs.size, size=shots, p=probs)
        vals, counts = np.unique(draws, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


_RSQRT2 = 1.0 / math.sqrt(2.0)


def _gather(idx: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(idx)
    for i, q in enumerate(qubits):
        out |= ((idx >> q) & 1) << i
    return out


def _scatter(idx: np.ndarray, qubits: Sequence[int], values: np.ndarray) -> np.ndarray:
    out = idx.copy()
    for i, q in enumerate(qubits):
        out &= ~(1 << q)
        out |= ((values >> i) & 1) << q
    return out


def dense_unitary(circuit: Circuit) -> np.ndarray:
    """Full matrix of a small circuit (test oracle, Q <= 10)."""
    Q = circuit.n_qubits
    if Q > 10:
        raise QubitCapError("dense_unitary is limited to 10 qubits")
    layout = RegisterLayout([("q", Q)], cap=None)
    cols = []
    for j in range(1 << Q):
        st = CircuitState(layout, np.eye(1, 1 << Q, j, dtype=complex)[0])
        cols.append(st.run(circuit).amplitudes)
    return np.array(cols).T


# -- grid bridge -------------------------------------------------------------

def _position_indices(layout: RegisterLayout, position_registers: Sequence[str], n: int) -> np.ndarray:
    """Circuit basis index (ancillas zero) for each flat grid index.

    Grid flat order is C-order over axes, axis 0 most significant.
    """
    d = len(position_registers)
    N = 1 << n
    coords = np.indices((N,) * d).reshape(d, -1).astype(np.int64)
    idx = np.zeros(coords.shape[1], dtype=np.int64)
    for axis, name in enumerate(position_registers):
        r = layout[name]
        if r.size != n:
            raise ValueError(f"register {name!r} has {r.size} qubits, grid axis needs {n}")
        idx |= coords[axis] << r.offset
    return idx


def _ancilla_indices(layout: RegisterLayout, position_registers: Sequence[str]) -> np.ndarray:
    anc_qubits = [q for r in layout.registers if r.name not in position_registers for q in r.qubits]
    k = len(anc_qubits)
    vals = np.arange(1 << k, dtype=np.int64)
    return _scatter(np.zeros_like(vals), anc_qubits, vals)


def load_grid_state(psi, layout: RegisterLayout, position_registers: Sequence[str] | None = None,
                    ancilla: dict[str, int] | None = None) -> CircuitState:
    """Embed a grid wavefunction into the position registers; ancillas in a basis state."""
    spec = psi.spec
    if position_registers is None:
        position_registers = [f"x{i}" for i in range(spec.d)]
    if len(position_registers) != spec.d:
        raise ValueError(f"grid has {spec.d} axes, got {len(position_registers)} position registers")
    pos = _position_indices(layout, position_registers, spec.n)
    base = layout.index_of(ancilla or {})
    amps = np.zeros(1 << layout.n_qubits, dtype=complex)
    amps[pos | base] = psi.amplitudes
    return CircuitState(layout, amps)


def schmidt_split(state: CircuitState, position_registers: Sequence[str]):
    """Split the state as position (x) ancilla.

    Returns (position vector, ancilla vector, deviation), where deviation
    is the norm of the part not captured by the leading Schmidt term.  The
    ancilla vector's phase is fixed so its largest component is real
    positive (ties go to the lowest index).
    """
    layout = state.layout
    d_pos = [layout[name] for name in position_registers]
    n = d_pos[0].size
    pos = _position_indices(layout, position_registers, n)
    anc = _ancilla_indices(layout, position_registers)
    mat = state.amplitudes[pos[:, None] | anc[None, :]]
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    total = float(np.sum(s ** 2))
    deviation = math.sqrt(max(total - s[0] ** 2, 0.0) / total) if total > 0 else 1.0
    anc_vec = vh[0]
    mags = np.abs(anc_vec)
    j = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-9))[0])
    anc_vec = anc_vec * (abs(anc_vec[j]) / anc_vec[j])
    pos_vec = mat @ anc_vec.conj()
    return pos_vec, anc_vec, deviation


def extract_grid_state(state: CircuitState, spec, position_registers: Sequence[str] | None = None,
                       tol: float = 1e-8):
    """Recover the grid wavefunction; rejects entangled ancillas."""
    from .grid import GridWavefunction

    if position_registers is None:
        position_registers = [f"x{i}" for i in range(spec.d)]
    pos_vec, _, deviation = schmidt_split(state, position_registers)
    if deviation > tol:
        raise SeparabilityError(
            f"ancilla registers are entangled with {list(position_registers)}: "
            f"Schmidt deviation {deviation:.3e} > {tol:.1e}"
        )
    return GridWavefunction(spec, pos_vec / np.linalg.norm(pos_vec))


# -- batched basis-input simulation ------------------------------------------

class NotBasisError(RuntimeError):
    """The circuit did not map a basis input to a single basis output."""


class _NotProduct(Exception):
    pass


def _simulate_product(circuit: Circuit, inputs: list[int], atol: float):
    """Per-qubit product-state simulation, batched over inputs.

    Each qubit holds a 2-vector.  Diagonal gates are applied when at most one
    of their qubits is in superposition (for every input); a CNOT needs a
    definite control.  This covers QFT blocks on basis inputs, where each
    qubit is controlled only by qubits still in (or back in) a basis state.
    """
    K, Q = len(inputs), circuit.n_qubits
    amp = np.zeros((K, Q, 2), dtype=complex)
    for i, v in enumerate(inputs):
        b = [(v >> q) & 1 for q in range(Q)]
        amp[i, np.arange(Q), b] = 1.0
    glob = np.ones(K, dtype=complex)

    def snap(q):
        a = amp[:, q, :]
        mag = np.abs(a)
        one = mag[:, 0] < atol
        zero = mag[:, 1] < atol
        cl = one | zero
        if np.any(cl):
            idx = np.where(one, 1, 0)
            ph = a[np.arange(K), idx]
            glob[cl] *= ph[cl] / np.abs(ph[cl])
            new = np.zeros((K, 2), dtype=complex)
            new[np.arange(K), idx] = 1.0
            amp[cl, q, :] = new[cl]

    def definite(qs):
        mag = np.abs(amp[:, list(qs), :])
        return (mag[..., 0] < atol) | (mag[..., 1] < atol)

    for g in circuit.gates:
        qs, name = g.qubits, g.name
        if name in TABLE_GATES:
            if not np.all(definite(qs)):
                raise _NotProduct
            bitv = np.abs(amp[:, list(qs), 1]) > 0.5
            ctrl, tgt = bitv[:, : g.n_ctrl], bitv[:, g.n_ctrl:]
            cval = (ctrl.astype(np.int64) << np.arange(ctrl.shape[1])).sum(axis=1)
            tval = (tgt.astype(np.int64) << np.arange(tgt.shape[1])).sum(axis=1)
            table = np.asarray(g.table, dtype=np.int64)[cval]
            new = (tval + table) % (1 << tgt.shape[1]) if name == "tadd" else tval ^ table
            for i, q in enumerate(qs[g.n_ctrl:]):
                nb = (new >> i) & 1
                amp[:, q, :] = 0
                amp[np.arange(K), q, nb] = 1.0
        elif name in ("h", "ry"):
            q = qs[0]
            a0, a1 = amp[:, q, 0].copy(), amp[:, q, 1].copy()
            if name == "h":
                amp[:, q, 0] = (a0 + a1) * _RSQRT2
                amp[:, q, 1] = (a0 - a1) * _RSQRT2
            else:
                c, sn = math.cos(g.angle / 2), math.sin(g.angle / 2)
                amp[:, q, 0] = c * a0 - sn * a1
                amp[:, q, 1] = sn * a0 + c * a1
            snap(q)
        elif name == "x":
            amp[:, qs[0], :] = amp[:, qs[0], ::-1].copy()
        elif name == "swap":
            amp[:, [qs[0], qs[1]], :] = amp[:, [qs[1], qs[0]], :]
        elif name == "cx":
            if not np.all(definite(qs[:1])):
                raise _NotProduct
            on = np.abs(amp[:, qs[0], 1]) > 0.5
            amp[on, qs[1], :] = amp[on, qs[1], ::-1].copy()
        else:  # p, cp, ccp: diagonal, symmetric in its qubits
            det = definite(qs)
            if np.any((~det).sum(axis=1) > 1):
                raise _NotProduct
            ph = np.exp(1j * g.angle)
            qa = np.array(qs)
            bit1 = np.abs(amp[:, qa, 1]) > 0.5
            fire = np.all(~det | bit1, axis=1)
            anyfree = np.any(~det, axis=1)
            rows = np.nonzero(fire & anyfree)[0]
            if rows.size:
                fq = qa[np.argmax(~det[rows], axis=1)]
                amp[rows, fq, 1] *= ph
            glob[fire & ~anyfree] *= ph
    if not np.all(definite(range(Q))):
        raise NotBasisError("output is not a basis state")
    bitv = np.abs(amp[:, :, 1]) > 0.5
    phases = glob * np.where(bitv, amp[:, :, 1], amp[:, :, 0]).prod(axis=1)
    if not np.allclose(np.abs(phases), 1.0, atol=1e-7):
        raise NotBasisError("output amplitude magnitude differs from 1")
    outputs = [sum(1 << q for q in range(Q) if bitv[i, q]) for i in range(K)]
    return outputs, phases


def simulate_basis(circuit: Circuit, inputs: Iterable[int], atol: float = 1e-9,
                   max_active: int = 22):
    """Run ``circuit`` on many basis inputs at once.

    A product-state pass is tried first (exact when no gate entangles, as
    for Fourier-space arithmetic on basis inputs).  Otherwise qubits in a
    definite basis state are tracked as classical bits; the rest (the "active" set) carry a dense vector per input.  A qubit
    leaves the active set as soon as its marginal is 0 or 1 for every
    input.  Returns ``(outputs, phases)`` where outputs are Python ints.
    Raises :class:`NotBasisError` if any output is not a basis state.
    """
    inputs = [int(v) for v in inputs]
    try:
        return _simulate_product(circuit, inputs, atol)
    except _NotProduct:
        pass
    K = len(inputs)
    Q = circuit.n_qubits
    bits = np.zeros((K, Q), dtype=np.uint8)
    for i, v in enumerate(inputs):
        for q in range(Q):
            bits[i, q] = (v >> q) & 1
    active: list[int] = []
    vec = np.ones((K, 1), dtype=complex)

    def axis_of(q: int) -> int:
        # vec index bit position for active qubit q
        return active.index(q)

    def activate(q: int) -> None:
        nonlocal vec
        a = len(active)
        new = np.zeros((K, 2 << a), dtype=complex)
        b = bits[:, q].astype(bool)
        lo = vec.shape[1]
        new[~b, :lo] = vec[~b]
        new[b, lo:] = vec[b]
        vec = new
        active.append(q)

    def try_release(q: int) -> None:
        nonlocal vec
        j = axis_of(q)
        a = len(active)
        v = vec.reshape((K,) + (2,) * a)
        ax = 1 + (a - 1 - j)
        p1 = np.sum(np.abs(np.take(v, 1, axis=ax)) ** 2, axis=tuple(range(1, a)))
        if np.all((p1 < atol) | (p1 > 1 - atol)):
            one = p1 > 0.5
            keep = np.where(one[:, None], np.take(v, 1, axis=ax).reshape(K, -1),
                            np.take(v, 0, axis=ax).reshape(K, -1))
            bits[:, q] = one
            active.pop(j)
            vec = keep

    def mask(qs, value=1):
        """Boolean (K, 2^a) mask where all qs equal 1."""
        a = len(active)
        m = np.ones((K, 1 << a), dtype=bool)
        cols = np.arange(1 << a)
        for q in qs:
            if q in active:
                m &= (((cols >> axis_of(q)) & 1) == 1)[None, :]
            else:
                m &= (bits[:, q] == 1)[:, None]
        return m

    for g in circuit.gates:
        qs = g.qubits
        name = g.name
        if name in TABLE_GATES:
            if any(q in active for q in qs):
                raise NotBasisError("table gate applied to a superposed register")
            ctrl, tgt = qs[: g.n_ctrl], qs[g.n_ctrl:]
            cval = np.zeros(K, dtype=np.int64)
            for i, q in enumerate(ctrl):
                cval |= bits[:, q].astype(np.int64) << i
            tval = np.zeros(K, dtype=np.int64)
            for i, q in enumerate(tgt):
                tval |= bits[:, q].astype(np.int64) << i
            table = np.asarray(g.table, dtype=np.int64)[cval]
            new = (tval + table) % (1 << len(tgt)) if name == "tadd" else tval ^ table
            for i, q in enumerate(tgt):
                bits[:, q] = (new >> i) & 1
            continue
        if name in ("p", "cp", "ccp"):
            vec = np.where(mask(qs), vec * np.exp(1j * g.angle), vec)
            continue
        if name == "x" and qs[0] not in active:
            bits[:, qs[0]] ^= 1
            continue
        if name == "cx" and not any(q in active for q in qs):
            bits[:, qs[1]] ^= bits[:, qs[0]]
            continue
        if name == "swap" and not any(q in active for q in qs):
            bits[:, [qs[0], qs[1]]] = bits[:, [qs[1], qs[0]]]
            continue
        # non-diagonal gate touching the active set (or an H): work on the vector
        for q in qs:
            if q not in active:
                activate(q)
        if len(active) > max_active:
            raise NotBasisError(f"active set grew to {len(active)} qubits")
        a = len(active)
        v = vec.reshape((K,) + (2,) * a)

        def ax(q):
            return 1 + (a - 1 - axis_of(q))

        if name == "h":
            x = ax(qs[0])
            v0 = np.take(v, 0, axis=x)
            v1 = np.take(v, 1, axis=x)
            v = np.stack([(v0 + v1) * _RSQRT2, (v0 - v1) * _RSQRT2], axis=x)
        elif name == "ry":
            x = ax(qs[0])
            v0 = np.take(v, 0, axis=x)
            v1 = np.take(v, 1, axis=x)
            c, sn = math.cos(g.angle / 2), math.sin(g.angle / 2)
            v = np.stack([c * v0 - sn * v1, sn * v0 + c * v1], axis=x)
        elif name == "x":
            v = np.flip(v, axis=ax(qs[0]))
        elif name == "cx":
            c, t = ax(qs[0]), ax(qs[1])
            sl = [slice(None)] * (a + 1)
            sl[c] = 1
            sub = v[tuple(sl)]
            t2 = t if t < c else t - 1
            v = v.copy()
            v[tuple(sl)] = np.flip(sub, axis=t2)
        elif name == "swap":
            v = np.swapaxes(v, ax(qs[0]), ax(qs[1]))
        vec = np.ascontiguousarray(v).reshape(K, -1)
        if name in ("h", "ry"):
            try_release(qs[0])
        elif name in ("x", "cx", "swap"):
            for q in qs:
                if q in active:
                    try_release(q)
    for q in list(active):
        if q in active:
            try_release(q)
    if active:
        raise NotBasisError(f"qubits {active} remain in superposition")
    phases = vec[:, 0]
    if not np.allclose(np.abs(phases), 1.0, atol=1e-7):
        raise NotBasisError("output amplitude magnitude differs from 1")
    outputs = []
    weights = [1 << q for q in range(Q)]
    for i in range(K):
        outputs.append(sum(w for w, b in zip(weights, bits[i]) if b))
    return outputs, phases
