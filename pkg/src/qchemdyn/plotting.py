"""Matplotlib figures written next to the CSV/JSON outputs (Agg backend, files only)."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .resources import as_float  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def density_snapshots(snapshots, path, title: str = "probability density") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for step, psi in snapshots:
        if psi.spec.d != 1:
            continue
        ax.plot(psi.spec.axis(0), psi.density(), label=f"step {step}")
    ax.set_xlabel("x (bohr)")
    ax.set_ylabel("|psi|^2 per point")
    ax.set_title(title)
    if len(snapshots) <= 10:
        ax.legend(fontsize=7)
    _save(fig, path)


def fidelity_curve(steps: Sequence[int], fidelities: Sequence[float], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(steps, 1 - np.asarray(fidelities), marker=".")
    ax.set_yscale("symlog", linthresh=1e-16)
    ax.set_xlabel("step")
    ax.set_ylabel("1 - fidelity vs classical oracle")
    _save(fig, path)


def expectation_curve(times, values, reference, path, ylabel: str = "<x>") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times, values, label="circuit")
    ax.plot(times, reference, "--", label="classical trajectory")
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)


def audit_bars(rows: Sequence[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r['kind']}\nm={r['m']}" for r in rows]
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r["measured"] for r in rows], 0.4, label="measured")
    ax.bar(x + 0.2, [float(r["formula"]) for r in rows], 0.4, label="closed form")
    ax.set_xticks(x, labels, fontsize=7)
    ax.set_yscale("log")
    ax.set_ylabel("rotation-class gates")
    ax.legend()
    _save(fig, path)


def fig2(rows_a: Sequence[dict], rows_b: Sequence[dict], path, qubit_budget: int | None = None,
         gate_budget: int | None = None) -> None:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.8))
    a.plot([r["B"] for r in rows_a], [r["qubits"] for r in rows_a], marker="o")
    if qubit_budget:
        a.axhline(qubit_budget, color="gray", ls="--")
    a.set_xlabel("particles B")
    a.set_ylabel("qubits")
    a.set_title("A: qubits n(3B-6)+4m")
    for m in sorted({r["m"] for r in rows_b}):
        sel = [r for r in rows_b if r["m"] == m]
        b.plot([r["B"] for r in sel], [as_float(r["gates"]) for r in sel], marker=".", label=f"m={m}")
    if gate_budget:
        b.axhline(gate_budget, color="gray", ls="--")
    b.set_yscale("log")
    b.set_xlabel("particles B")
    b.set_ylabel("gates")
    b.set_title("B: Coulomb gates")
    b.legend(fontsize=7)
    _save(fig, path)


def fig3(rows: Sequence[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for Z in sorted({r["Z"] for r in rows}):
        sel = [r for r in rows if r["Z"] == Z]
        ax.plot([r["N_a"] for r in sel], [as_float(r["diabatic"]) for r in sel], marker=".", label=f"diabatic Z={Z}")
    sel = [r for r in rows if r["Z"] == rows[0]["Z"]]
    ax.plot([r["N_a"] for r in sel], [as_float(r["bo"]) for r in sel], "k--", label=f"BO K={rows[0]['K']}")
    ax.set_yscale("log")
    ax.set_xlabel("atoms")
    ax.set_ylabel("gates per nuclear step")
    ax.legend(fontsize=7)
    _save(fig, path)


def phase_histogram(hist, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(np.arange(hist.bins) / hist.bins, hist.probabilities, width=1 / hist.bins)
    ax.set_xlabel("phase (turns)")
    ax.set_ylabel("probability")
    _save(fig, path)


def populations(result, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vs = sorted(result.populations)
    ax.bar(vs, [result.populations[v] for v in vs])
    ax.set_xlabel("v'")
    ax.set_ylabel("P(v')")
    ax.set_title(f"residual {result.residual:.2e}")
    _save(fig, path)


def convergence(sizes, rms, path, slope: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(sizes, rms, marker="o", label="RMS error" + (f" (slope {slope:.2f})" if slope is not None else ""))
    ax.loglog(sizes, rms[0] * np.sqrt(sizes[0] / np.asarray(sizes)), "--", label="N^-1/2")
    ax.set_xlabel("samples")
    ax.set_ylabel("|k_MC - k_quad|")
    ax.legend()
    _save(fig, path)
