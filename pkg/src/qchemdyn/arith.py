"""Reversible fixed-point arithmetic built from Fourier-space rotations.

Every operation that writes into a target register does so as one block:
QFT on the target, a set of (multiply-)controlled phase rotations, inverse
QFT.  A term ``(controls, w)`` adds ``w`` to the target when all control
qubits are 1; with the target in the Fourier basis this is a phase
``2 pi w 2^j / 2^k`` on target qubit ``j``, skipped when it is a multiple
of ``2 pi``.

Cost formulas from the resource model are audited against the circuits
here with :func:`audit_counts`; see the README for the counting
convention.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from . import oracle
from .qsim import Circuit, GateTally, RegisterLayout, iqft, qft, simulate_basis

Qubits = Sequence[int]


@dataclass(frozen=True)
class FixedPointSpec:
    """m-bit unsigned encoding ``value = count * scale``."""

    m: int
    scale: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def M(self) -> int:
        return 1 << self.m

    @property
    def v_max(self) -> int:
        return self.M - 1

    @property
    def delta_t(self) -> float:
        return 2 * math.pi / self.M

    def encode(self, value: float) -> int:
        c = int(round(value / self.scale))
        if not 0 <= c < self.M:
            raise ValueError(f"{value} is outside the encodable range")
        return c

    def decode(self, count: int) -> float:
        return count * self.scale


# -- primitive blocks ----------------------------------------------------------

def phase_terms(circ: Circuit, target: Qubits, terms: Iterable[tuple[tuple[int, ...], int]], sign: int = 1) -> None:
    """Emit the rotations adding ``sum w * prod(controls)`` to a Fourier-basis target."""
    k = len(target)
    mod = 1 << k
    for controls, w in terms:
        w = (sign * w) % mod
        if w == 0:
            continue
        for j, tq in enumerate(target):
            num = (w << j) % mod
            if num == 0:
                continue
            theta = 2 * math.pi * num / mod
            if len(controls) == 0:
                circ.p(theta, tq)
            elif len(controls) == 1:
                circ.cp(theta, controls[0], tq)
            elif len(controls) == 2:
                circ.ccp(theta, controls[0], controls[1], tq)
            else:
                raise ValueError("at most two controls per rotation")


def fourier_block(circ: Circuit, target: Qubits, terms, sign: int = 1) -> None:
    qft(circ, target)
    phase_terms(circ, target, terms, sign)
    iqft(circ, target)


def _disjoint(*regs: Qubits) -> None:
    seen: set[int] = set()
    for r in regs:
        s = set(r)
        if s & seen:
            raise ValueError("registers overlap")
        seen |= s


def add_into(circ: Circuit, a: Qubits, b: Qubits, sign: int = 1) -> None:
    """b <- b + sign * a (mod 2^len(b))."""
    if len(a) != len(b):
        raise ValueError(f"width mismatch: {len(a)} vs {len(b)}")
    _disjoint(a, b)
    fourier_block(circ, b, [((q,), 1 << k) for k, q in enumerate(a)], sign)


def cadd_terms(ctrl: int, a: Qubits):
    return [((ctrl, q), 1 << k) for k, q in enumerate(a)]


def controlled_add_into(circ: Circuit, ctrl: int, a: Qubits, b: Qubits, sign: int = 1) -> None:
    if len(a) != len(b):
        raise ValueError(f"width mismatch: {len(a)} vs {len(b)}")
    _disjoint(a, b)
    if ctrl in a or ctrl in b:
        raise ValueError("control qubit lies inside an operand register")
    fourier_block(circ, b, cadd_terms(ctrl, a), sign)


def add_constant(circ: Circuit, b: Qubits, value: int, controls: tuple[int, ...] = ()) -> None:
    fourier_block(circ, b, [(tuple(controls), int(value))])


def load_constant(circ: Circuit, reg: Qubits, value: int) -> None:
    for k, q in enumerate(reg):
        if (value >> k) & 1:
            circ.x(q)


def mul_terms(a: Qubits, b: Qubits, shift: int, guard: int):
    """Schoolbook partial products of a*b, one controlled add per bit of b.

    A bit pair (i, k) contributes 2^(i+k-shift+guard) when i+k >= shift-guard.
    Squaring (a is b) merges the symmetric pairs.
    """
    same = list(a) == list(b)
    terms = []
    for i, bq in enumerate(b):
        for k, aq in enumerate(a):
            e = i + k - shift + guard
            if e < 0:
                continue
            if same:
                if k < i:
                    continue
                if k == i:
                    terms.append(((aq,), 1 << e))
                else:
                    terms.append(((aq, bq), 2 << e))
            else:
                terms.append(((aq, bq), 1 << e))
    return terms


def multiply_into(circ: Circuit, a: Qubits, b: Qubits, acc: Qubits, shift: int,
                  guard: int = 0, sign: int = 1) -> None:
    """acc <- acc + sign * trunc_mul(a, b); acc has len(a) + guard qubits."""
    if len(a) != len(b):
        raise ValueError("multiplicands must have equal width")
    if len(acc) != len(a) + guard:
        raise ValueError(f"accumulator needs {len(a) + guard} qubits")
    if list(a) == list(b):
        _disjoint(a, acc)
    else:
        _disjoint(a, b, acc)
    fourier_block(circ, acc, mul_terms(a, b, shift, guard), sign)


def abs_in_place(circ: Circuit, d: Qubits, sign_q: int) -> None:
    """(d, 0) -> (|d|, sign(d)) for two's complement d; sign_q must start at 0."""
    circ.cx(d[-1], sign_q)
    for q in d:
        circ.cx(sign_q, q)
    add_constant(circ, d, 1, controls=(sign_q,))


def quadratic_terms(z: Qubits, K_num: int, k_shift: int):
    diag, off = oracle.quadratic_weights(K_num, k_shift, len(z), 62)
    terms = [((z[i],), w) for i, w in diag.items()]
    terms += [((z[i], z[l]), w) for (i, l), w in off.items()]
    return terms


def quadratic_accumulate(circ: Circuit, z: Qubits, sign_q: int, target: Qubits, K_num: int,
                         k_shift: int = 0, center: int = 0, sign: int = 1) -> None:
    """target += K * |z - center|^2 (bit-pair truncated), leaving z unchanged.

    z is shifted and folded to its magnitude in place, then restored.
    """
    n = len(z)
    tmp = Circuit(circ.n_qubits)
    if center % (1 << n):
        add_constant(tmp, z, -center)
    abs_in_place(tmp, z, sign_q)
    circ.extend(tmp)
    fourier_block(circ, target, quadratic_terms(z, K_num, k_shift), sign)
    circ.extend(tmp.inverse())


# -- composed circuits ---------------------------------------------------------

@dataclass
class ArithmeticCircuit:
    kind: str
    m: int
    layout: RegisterLayout
    circuit: Circuit
    sections: dict[str, tuple[int, int]] = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def tally(self, section: str | None = None) -> GateTally:
        if section is None:
            return self.circuit.tally()
        t = GateTally()
        for name, (lo, hi) in self.sections.items():
            if name == section or name.startswith(section + ":"):
                for g in self.circuit.gates[lo:hi]:
                    t.add(g)
        return t

    def reg(self, name: str):
        return self.layout.qubits(name)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    def run_basis(self, assignments: Sequence[dict[str, int]]) -> list[dict[str, int]]:
        """Register values after running the circuit on each basis input (unset registers start at 0)."""
        L = self.layout
        outs, _ = simulate_basis(self.circuit, [L.index_of(a) for a in assignments])
        return [{n: L.value_of(o, n) for n in L.names} for o in outs]


class CircuitBuilder:
    """A circuit under construction over a fixed layout, with named gate ranges."""

    def __init__(self, kind: str, m: int, regs: list[tuple[str, int]] | RegisterLayout, cap=None):
        self.layout = regs if isinstance(regs, RegisterLayout) else RegisterLayout(regs, cap=cap)
        self.circ = Circuit.on(self.layout)
        self.kind = kind
        self.m = m
        self.sections: dict[str, tuple[int, int]] = {}

    def q(self, name: str):
        return self.layout.qubits(name)

    def section(self, name: str):
        """Context manager recording the gate range emitted inside it (may nest)."""
        builder = self

        class _Ctx:
            def __enter__(self_):
                self_.start = len(builder.circ)

            def __exit__(self_, *exc):
                builder.sections[name] = (self_.start, len(builder.circ))

        return _Ctx()

    def done(self, **params) -> ArithmeticCircuit:
        return ArithmeticCircuit(self.kind, self.m, self.layout, self.circ, self.sections, params)


def draper_add(m: int) -> ArithmeticCircuit:
    """|a>|b> -> |a>|a + b mod 2^m>."""
    b = CircuitBuilder("add", m, [("a", m), ("b", m)])
    with b.section("compute"):
        add_into(b.circ, b.q("a"), b.q("b"))
    return b.done()


def draper_sub(m: int) -> ArithmeticCircuit:
    b = CircuitBuilder("sub", m, [("a", m), ("b", m)])
    with b.section("compute"):
        add_into(b.circ, b.q("a"), b.q("b"), sign=-1)
    return b.done()


def controlled_add(m: int, shared_qft: bool = False) -> ArithmeticCircuit:
    """|c>|a>|b> -> |c>|a>|b + c a>.

    With ``shared_qft`` the QFT pair is placed in its own section so the
    audit can exclude it (it is shared by all C-ADDs of a multiplication).
    """
    b = CircuitBuilder("cadd", m, [("c", 1), ("a", m), ("b", m)])
    c, a, t = b.q("c")[0], b.q("a"), b.q("b")
    with b.section("qft"):
        qft(b.circ, t)
    with b.section("compute"):
        phase_terms(b.circ, t, cadd_terms(c, a))
    with b.section("iqft"):
        iqft(b.circ, t)
    return b.done()


def multiply(m: int, shift: int | None = None, guard: int = 0) -> ArithmeticCircuit:
    """acc <- acc + trunc_mul(a, b); default keeps the top m product bits."""
    shift = m if shift is None else shift
    b = CircuitBuilder("mul", m, [("a", m), ("b", m), ("acc", m + guard)])
    with b.section("compute"):
        multiply_into(b.circ, b.q("a"), b.q("b"), b.q("acc"), shift, guard)
    return b.done(shift=shift, guard=guard)


def square(m: int, shift: int | None = None, guard: int = 0) -> ArithmeticCircuit:
    shift = m if shift is None else shift
    b = CircuitBuilder("square", m, [("a", m), ("acc", m + guard)])
    with b.section("compute"):
        multiply_into(b.circ, b.q("a"), b.q("a"), b.q("acc"), shift, guard)
    return b.done(shift=shift, guard=guard)


def _r2_forward(b: CircuitBuilder, p1: list[str], p2: list[str], dregs: list[str], sgn: list[int],
                acc: Qubits, shift: int, guard: int) -> None:
    for k, (r1, r2, dr) in enumerate(zip(p1, p2, dregs)):
        d = b.q(dr)
        for qs, qd in zip(b.q(r2), d):
            b.circ.cx(qs, qd)
        add_into(b.circ, b.q(r1), d, sign=-1)
        abs_in_place(b.circ, d, sgn[k])
        multiply_into(b.circ, d, d, acc, shift, guard)


def r_squared(m: int, dims: int = 3, shift: int | None = None, uncompute: bool = False) -> ArithmeticCircuit:
    """acc <- acc + sum_k |p2_k - p1_k|^2 (truncated), difference registers d_k kept as scratch."""
    shift = m if shift is None else shift
    regs = [(f"p1_{k}", m) for k in range(dims)] + [(f"p2_{k}", m) for k in range(dims)]
    regs += [(f"d_{k}", m) for k in range(dims)] + [("sgn", dims), ("acc", m)]
    b = CircuitBuilder("r2", m, regs)
    p1 = [f"p1_{k}" for k in range(dims)]
    p2 = [f"p2_{k}" for k in range(dims)]
    dr = [f"d_{k}" for k in range(dims)]
    sgn = list(b.q("sgn"))
    with b.section("compute"):
        _r2_forward(b, p1, p2, dr, sgn, b.q("acc"), shift, 0)
    if uncompute:
        # restore the difference registers, keep acc
        lo, hi = b.sections["compute"]
        fwd = Circuit(b.circ.n_qubits)
        fwd.gates = list(b.circ.gates[lo:hi])
        with b.section("uncompute"):
            _uncompute_keep(b, fwd, keep=set(b.q("acc")))
    return b.done(shift=shift, dims=dims)


def _uncompute_keep(b: CircuitBuilder, forward: Circuit, keep: set[int]) -> None:
    """Reverse ``forward`` except gate blocks that write into ``keep``.

    Only used where the kept register is written by complete Fourier blocks
    that no later block reads.
    """
    inv = []
    for g in reversed(forward.gates):
        if g.qubits[-1] in keep:
            continue
        inv.append(g.inverse())
    b.circ.gates.extend(inv)


def default_guard(m: int) -> int:
    return 4 if m >= 8 else 1


def _nr_regs(m: int, guard: int, prefix: str = "") -> list[tuple[str, int]]:
    W = m + guard
    regs = [(f"{prefix}u0", W)]
    for n in range(1, oracle.NR_ITERATIONS + 1):
        regs += [(f"{prefix}t1_{n}", W), (f"{prefix}t2_{n}", W), (f"{prefix}u{n}", W)]
    return regs


def _nr_forward(b: CircuitBuilder, S: Qubits, m: int, guard: int, prefix: str = "") -> None:
    top = lambda name: b.q(name)[guard:]
    load_constant(b.circ, b.q(f"{prefix}u0"), oracle.nr_seed(m) << guard)
    for n in range(1, oracle.NR_ITERATIONS + 1):
        u_prev = top(f"{prefix}u{n - 1}")
        t1, t2, u = b.q(f"{prefix}t1_{n}"), b.q(f"{prefix}t2_{n}"), b.q(f"{prefix}u{n}")
        multiply_into(b.circ, u_prev, u_prev, t1, m, guard)
        load_constant(b.circ, t2, 3 << (m - 2 + guard))
        multiply_into(b.circ, S, top(f"{prefix}t1_{n}"), t2, m, guard, sign=-1)
        multiply_into(b.circ, u_prev, top(f"{prefix}t2_{n}"), u, m - 1, guard)


def inv_sqrt(m: int, guard: int | None = None) -> ArithmeticCircuit:
    """Four Newton-Raphson iterations for 1/sqrt(S / 2^m).

    Output: top m bits of register ``u4``; 1/sqrt(S/2^m) ~= 2 u4 / 2^m.
    Intermediate registers are left holding their values.
    """
    guard = default_guard(m) if guard is None else guard
    b = CircuitBuilder("inv_sqrt", m, [("S", m)] + _nr_regs(m, guard))
    with b.section("compute"):
        _nr_forward(b, b.q("S"), m, guard)
    return b.done(guard=guard)


@dataclass(frozen=True)
class CoulombFormat:
    """Fixed-point conventions for the Coulomb oracle.

    Positions are m-bit counts of ``h`` length units.  S = (sum d^2) >>
    r_shift read as an m-bit fraction, so the Newton-Raphson calibrated range
    corresponds to separations r in [sqrt(0.3), 1) * ``unit_counts``.
    """

    m: int
    guard: int
    r_shift: int
    h: float = 1.0
    e_unit: float = 1.0
    acc_bits: int | None = None

    @classmethod
    def default(cls, m: int, h: float = 1.0, e_unit: float = 1.0, acc_bits: int | None = None):
        return cls(m, default_guard(m), max(m - 2, 0), h, e_unit, acc_bits)

    @property
    def out_bits(self) -> int:
        return self.acc_bits or self.m

    @property
    def unit_counts(self) -> float:
        return 2.0 ** ((self.r_shift + self.m) / 2)

    def kappa(self, qq: float) -> float:
        return qq * 2.0 / ((1 << self.m) * self.h * self.unit_counts * self.e_unit)

    def calibrated(self, r_counts: float) -> bool:
        s = (r_counts / self.unit_counts) ** 2
        return oracle.NR_RANGE[0] <= s < oracle.NR_RANGE[1]


def coulomb_scratch(fmt: CoulombFormat, dims: int) -> list[tuple[str, int]]:
    """Scratch registers shared by all pairs (differences, signs, r^2, Newton-Raphson)."""
    W = fmt.m + fmt.guard
    return [(f"d_{k}", fmt.m) for k in range(dims)] + [("sgn", dims), ("r2", W)] + _nr_regs(fmt.m, fmt.guard)


def coulomb_kappas(fmt: CoulombFormat, charges: Sequence[float]) -> dict[tuple[int, int], float]:
    B = len(charges)
    return {(i, j): fmt.kappa(charges[i] * charges[j]) for i in range(B) for j in range(i + 1, B)}


def emit_coulomb(b: CircuitBuilder, fmt: CoulombFormat, charges: Sequence[float],
                 position_names: Sequence[Sequence[str]], acc_name: str) -> dict:
    """Append the pairwise Coulomb accumulation to ``b`` (scratch must be in the layout).

    For each pair the scratch (differences, r^2, Newton-Raphson registers) is
    computed, the scaled 1/r is added into ``acc_name``, and the scratch is
    uncomputed so the next pair reuses it.
    """
    m, g = fmt.m, fmt.guard
    if len(charges) < 2:
        raise ValueError("need at least two particles")
    dims = len(position_names[0])
    dr = [f"d_{k}" for k in range(dims)]
    sgn = list(b.q("sgn"))
    kappas = coulomb_kappas(fmt, charges)
    acc = b.q(acc_name)
    for (i, j), kap in kappas.items():
        start = len(b.circ)
        with b.section(f"forward:{i},{j}"):
            _r2_forward(b, list(position_names[i]), list(position_names[j]), dr, sgn,
                        b.q("r2"), fmt.r_shift, g)
            _nr_forward(b, b.q("r2")[g:], m, g)
        fwd = Circuit(b.circ.n_qubits)
        fwd.gates = b.circ.gates[start:]
        with b.section(f"payload:{i},{j}"):
            w = oracle.constant_weights(kap, m, len(acc))
            u4 = b.q("u4")[g:]
            fourier_block(b.circ, acc, [((u4[k],), wk) for k, wk in enumerate(w)])
        with b.section(f"uncompute:{i},{j}"):
            b.circ.extend(fwd.inverse())
    return kappas


def coulomb_oracle(fmt: CoulombFormat, charges: Sequence[float], dims: int = 1) -> ArithmeticCircuit:
    """acc <- acc + sum_{i<j} q_i q_j / r_ij in fixed point, pair by pair."""
    B = len(charges)
    if B < 2:
        raise ValueError("need at least two particles")
    names = [[f"p{i}_{k}" for k in range(dims)] for i in range(B)]
    regs = [(nm, fmt.m) for row in names for nm in row]
    regs += coulomb_scratch(fmt, dims) + [("acc", fmt.out_bits)]
    b = CircuitBuilder("coulomb", fmt.m, regs)
    kappas = emit_coulomb(b, fmt, charges, names, "acc")
    return b.done(kappas=kappas, dims=dims, fmt=fmt, position_names=names)


def kinetic_oracle(n: int, m: int, K: Sequence[int], k_shift: int = 0) -> ArithmeticCircuit:
    """acc <- acc + sum_axis K_axis * |p_axis|^2 for signed momentum registers."""
    d = len(K)
    regs = [(f"p{k}", n) for k in range(d)] + [("sgn", 1), ("acc", m)]
    b = CircuitBuilder("kinetic", m, regs)
    with b.section("compute"):
        for k in range(d):
            quadratic_accumulate(b.circ, b.q(f"p{k}"), b.q("sgn")[0], b.q("acc"), int(K[k]), k_shift)
    return b.done(K=list(K), k_shift=k_shift, n=n)


# -- audit ---------------------------------------------------------------------

def si_formula(kind: str, m: int) -> Fraction:
    m = Fraction(m)
    return {
        "add": Fraction(3, 2) * m ** 2,
        "cadd": Fraction(5, 2) * m ** 2,
        "mul": Fraction(5, 4) * m ** 3 + m ** 2,
        "r2": Fraction(15, 4) * m ** 3 + Fraction(15, 2) * m ** 2,
        "inv_sqrt": 15 * m ** 3 + 18 * m ** 2,
        "coulomb": Fraction(75, 4) * m ** 3 + Fraction(51, 2) * m ** 2,
    }[kind]


SI_LEADING = {"add": Fraction(3, 2), "cadd": Fraction(5, 2), "mul": Fraction(5, 4),
              "r2": Fraction(15, 4), "inv_sqrt": Fraction(15), "coulomb": Fraction(75, 4)}
EXACT_KINDS = ("add", "cadd", "mul")


def build_for_audit(kind: str, m: int) -> tuple[ArithmeticCircuit, str]:
    if kind == "add":
        return draper_add(m), "compute"
    if kind == "cadd":
        return controlled_add(m), "compute"
    if kind == "mul":
        return multiply(m), "compute"
    if kind == "r2":
        return r_squared(m, dims=3), "compute"
    if kind == "inv_sqrt":
        return inv_sqrt(m), "compute"
    if kind == "coulomb":
        return coulomb_oracle(CoulombFormat.default(m), [1.0, 1.0], dims=3), "forward"
    raise ValueError(f"unknown circuit kind {kind!r}")


def audit_counts(kind: str, m: int) -> dict:
    """Measured rotation-class gates of one construction vs the closed form.

    ``ratio`` is measured / formula.  For composed circuits the measured
    figure is the forward computation of one pair (no uncomputation), which
    is what the closed form counts.
    """
    if not 2 <= m <= 32:
        raise ValueError("m must lie in [2, 32]")
    circ, section = build_for_audit(kind, m)
    measured = circ.tally(section).rotation_class
    formula = si_formula(kind, m)
    return {
        "kind": kind,
        "m": m,
        "measured": measured,
        "formula": formula,
        "ratio": float(Fraction(measured) / formula),
        "exact": measured == formula,
    }


def write_audit_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "m", "measured", "formula", "ratio"])
        for r in rows:
            w.writerow([r["kind"], r["m"], r["measured"], str(r["formula"]), f"{r['ratio']:.6f}"])
