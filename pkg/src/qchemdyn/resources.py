"""Closed-form resource model: Coulomb gate counts, qubit counts, BO interpolation cost, crossover.

All counts use exact rational arithmetic; values are returned as ``int``
when integral and as :class:`fractions.Fraction` otherwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

Count = int | Fraction

DEFAULT_STEP_RATIO = 1000


def _norm(x: Fraction) -> Count:
    return int(x) if x.denominator == 1 else x


def _check_pos(**kw):
    for k, v in kw.items():
        if int(v) != v or v < 1:
            raise ValueError(f"{k} must be a positive integer, got {v!r}")


def coulomb_gates_per_pair(m: int) -> Count:
    if m < 2:
        raise ValueError("m must be >= 2")
    m = Fraction(m)
    return _norm(Fraction(75, 4) * m ** 3 + Fraction(51, 2) * m ** 2)


def coulomb_gates_per_step(B: int, m: int) -> Count:
    if B < 2:
        raise ValueError("need at least two particles")
    return _norm(Fraction(B * (B - 1), 2) * Fraction(coulomb_gates_per_pair(m)))


def qubit_count(B: int, n: int, m: int, dof: int | None = None) -> int:
    """n (3B - 6) + 4m; ``dof`` replaces 3B - 6 for atoms and diatomics."""
    _check_pos(n=n, m=m)
    if dof is None:
        if B < 3:
            raise ValueError("3B - 6 needs B >= 3; pass dof explicitly for smaller systems")
        dof = 3 * B - 6
    if dof < 1:
        raise ValueError("dof must be >= 1")
    return n * dof + 4 * m


def _poly_cost(m: int) -> Fraction:
    m = Fraction(m)
    return Fraction(5, 4) * m ** 3 + Fraction(5, 2) * m ** 2


@dataclass(frozen=True)
class BOCost:
    exact: Count  # K^(d+1)/(K-1) (5/4 m^3 + 5/2 m^2)
    approx: Count  # K^d (5/4 m^3 + 5/2 m^2)
    registers: int  # ceil(K^(d-1)/(K-1)) temporary registers


def bo_gates_per_nuclear_step(K: int, d: int, m: int) -> BOCost:
    """Horner-scheme evaluation of a degree-K tensor interpolant in d nuclear coordinates."""
    if K < 2:
        raise ValueError("K must be >= 2")
    _check_pos(d=d, m=m)
    c = _poly_cost(m)
    exact = Fraction(K ** (d + 1), K - 1) * c
    approx = K ** d * c
    regs = -(-(K ** (d - 1)) // (K - 1))
    return BOCost(_norm(exact), _norm(approx), int(regs))


def diabatic_cost(n_atoms: int, Z: int, m: int, step_ratio: int = DEFAULT_STEP_RATIO) -> Count:
    """Coulomb cost of the electronic steps spanning one nuclear step, B = N_a (Z + 1)."""
    return _norm(step_ratio * Fraction(coulomb_gates_per_step(n_atoms * (Z + 1), m)))


def bo_cost(n_atoms: int, K: int, m: int, exact: bool = False) -> Count:
    c = bo_gates_per_nuclear_step(K, 3 * n_atoms - 6, m)
    return c.exact if exact else c.approx


def crossover_atoms(Z: int, K: int, m: int, step_ratio: int = DEFAULT_STEP_RATIO, exact: bool = False,
                    start: int = 3, limit: int = 1000) -> int:
    """Smallest atom count N_a >= ``start`` where the diabatic cost is at most the BO cost."""
    _check_pos(Z=Z, K=K, m=m, step_ratio=step_ratio)
    if start < 3:
        raise ValueError("3 N_a - 6 needs at least three atoms")
    for na in range(start, limit + 1):
        if diabatic_cost(na, Z, m, step_ratio) <= bo_cost(na, K, m, exact):
            return na
    raise ValueError(f"no crossover below {limit} atoms")


@dataclass
class FeasibilityReport:
    gate_budget: int
    qubit_budget: int
    n: int
    m: int
    steps: int
    max_particles: int
    rows: list[dict] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.max_particles > 0

    def frontier_row(self) -> dict | None:
        for r in self.rows:
            if r["B"] == self.max_particles:
                return r
        return None


def feasibility_report(gate_budget: int, qubit_budget: int, n: int, m: int, steps: int,
                       b_max: int = 60) -> FeasibilityReport:
    """Largest B (>= 3) whose qubit count and total gate count fit the budgets; 0 if none."""
    _check_pos(gate_budget=gate_budget, qubit_budget=qubit_budget, n=n, m=m, steps=steps)
    rows = []
    best = 0
    for B in range(3, b_max + 1):
        q = qubit_count(B, n, m)
        gates = steps * Fraction(coulomb_gates_per_step(B, m))
        ok = q <= qubit_budget and gates <= gate_budget
        rows.append({"B": B, "qubits": q, "gates_per_step": _norm(Fraction(coulomb_gates_per_step(B, m))),
                     "total_gates": _norm(gates), "fits_qubits": q <= qubit_budget,
                     "fits_gates": gates <= gate_budget})
        if ok:
            best = B
    return FeasibilityReport(gate_budget, qubit_budget, n, m, steps, best, rows)


# -- figure data -------------------------------------------------------------------

def fig2a_rows(n: int, m: int, B_values: Iterable[int]) -> list[dict]:
    return [{"B": B, "n": n, "m": m, "qubits": qubit_count(B, n, m)} for B in B_values]


def fig2b_rows(m_values: Sequence[int], B_values: Iterable[int], steps: int) -> list[dict]:
    B_values = list(B_values)
    return [{"B": B, "m": m, "steps": steps, "gates": _norm(steps * Fraction(coulomb_gates_per_step(B, m)))}
            for m in m_values for B in B_values]


def fig3_rows(Z_values: Sequence[int], K: int, m: int, atoms: Iterable[int],
              step_ratio: int = DEFAULT_STEP_RATIO) -> list[dict]:
    atoms = list(atoms)
    return [{"Z": Z, "N_a": na, "K": K, "m": m, "diabatic": diabatic_cost(na, Z, m, step_ratio),
             "bo": bo_cost(na, K, m)} for Z in Z_values for na in atoms]


def write_rows(rows: Sequence[dict], path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (str(v) if isinstance(v, Fraction) else v) for k, v in r.items()})


def as_float(x: Count) -> float:
    return float(x)


def log10(x: Count) -> float:
    return math.log10(float(x))
