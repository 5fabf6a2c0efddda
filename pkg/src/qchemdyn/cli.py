"""Scenario runner: ``qchemdyn run|validate|list-builtins|emit-figures``.

Configs are JSON.  Any physical quantity may be a bare number (atomic
units) or ``{"value": x, "unit": "angstrom"}``; units are resolved during
validation, before any computation.  Outputs are collected in memory and
only written once the scenario has finished, so a failed run leaves the
output directory untouched.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import arith
from . import grid as G
from . import kickback as K
from . import measure as Ms
from . import resources as R
from .prep import ThermalSpec, WavepacketSpec, gaussian_packet, harmonic_eigenstate
from .scenarios import RateModel
from .qsim import DEFAULT_QUBIT_CAP, NotBasisError, QubitCapError, SeparabilityError

SCHEMA_VERSION = 1

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4

# conversion factors into atomic units
UNITS: dict[str, dict[str, float]] = {
    "length": {"bohr": 1.0, "au": 1.0, "angstrom": 1 / 0.529177210903, "nm": 10 / 0.529177210903},
    "inverse_length": {"1/bohr": 1.0, "au": 1.0, "1/angstrom": 0.529177210903},
    "energy": {"hartree": 1.0, "au": 1.0, "ev": 1 / 27.211386245988, "kcal/mol": 1 / 627.5094740631,
               "kj/mol": 1 / 2625.4996394799, "cm-1": 1 / 219474.6313632, "kelvin": 3.166811563e-6},
    "time": {"au": 1.0, "fs": 1 / 0.02418884326585747},
    "mass": {"me": 1.0, "au": 1.0, "amu": 1822.888486209},
    "momentum": {"au": 1.0},
}


class ConfigError(Exception):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


_MISSING = object()


class _Checker:
    """Collects (field path, message) pairs instead of failing at the first problem."""

    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def err(self, path: str, msg: str):
        self.errors.append((path, msg))
        return None

    def section(self, cfg: dict, key: str, path: str = "", required: bool = True) -> dict:
        p = f"{path}.{key}" if path else key
        node = cfg.get(key, _MISSING)
        if node is _MISSING:
            if required:
                self.err(p, "missing section")
            return {}
        if not isinstance(node, dict):
            self.err(p, "must be an object")
            return {}
        return node

    def quantity(self, node, path: str, dim: str | None = None):
        if isinstance(node, dict) and "value" in node:
            unit = str(node.get("unit", "au")).lower()
            table = UNITS.get(dim or "", {"au": 1.0})
            if unit not in table:
                return self.err(path, f"unit {unit!r} is not a {dim or 'dimensionless'} unit "
                                      f"(expected one of {sorted(table)})")
            node, factor = node["value"], table[unit]
        else:
            factor = 1.0
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            return self.err(path, "must be a number")
        v = float(node) * factor
        if not math.isfinite(v):
            return self.err(path, "must be finite")
        return v

    def num(self, cfg: dict, key: str, path: str, dim: str | None = None, default=_MISSING,
            lo: float | None = None, hi: float | None = None, positive: bool = False):
        p = f"{path}.{key}" if path else key
        if key not in cfg:
            if default is _MISSING:
                return self.err(p, "required")
            return default
        v = self.quantity(cfg[key], p, dim)
        if v is None:
            return None
        if positive and v <= 0:
            return self.err(p, "must be positive")
        if lo is not None and v < lo or hi is not None and v > hi:
            return self.err(p, f"must lie in [{lo}, {hi}]")
        return v

    def integer(self, cfg: dict, key: str, path: str, default=_MISSING, lo: int | None = None,
                hi: int | None = None):
        p = f"{path}.{key}" if path else key
        if key not in cfg:
            if default is _MISSING:
                return self.err(p, "required")
            return default
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            return self.err(p, "must be an integer")
        v = int(v)
        if lo is not None and v < lo or hi is not None and v > hi:
            return self.err(p, f"must lie in [{lo}, {hi}]")
        return v

    def numbers(self, cfg: dict, key: str, path: str, dim: str | None = None, default=_MISSING,
                length: int | None = None, positive: bool = False):
        """A number or list of numbers, broadcast to ``length`` when given."""
        p = f"{path}.{key}" if path else key
        node = cfg.get(key, _MISSING)
        if node is _MISSING:
            if default is _MISSING:
                return self.err(p, "required")
            node = default
        items = node if isinstance(node, list) else [node]
        vals = [self.quantity(x, f"{p}[{i}]", dim) for i, x in enumerate(items)]
        if any(v is None for v in vals):
            return None
        if length is not None:
            if len(vals) == 1:
                vals = vals * length
            elif len(vals) != length:
                return self.err(p, f"needs {length} entries, got {len(vals)}")
        if positive and any(v <= 0 for v in vals):
            return self.err(p, "must be positive")
        return vals

    def int_list(self, cfg: dict, key: str, path: str, default=_MISSING, lo: int | None = None,
                 hi: int | None = None):
        p = f"{path}.{key}" if path else key
        node = cfg.get(key, _MISSING)
        if node is _MISSING:
            if default is _MISSING:
                return self.err(p, "required")
            node = default
        if not isinstance(node, list) or not node:
            return self.err(p, "must be a non-empty list of integers")
        out = []
        for i, v in enumerate(node):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
                return self.err(f"{p}[{i}]", "must be an integer")
            if lo is not None and v < lo or hi is not None and v > hi:
                return self.err(f"{p}[{i}]", f"must lie in [{lo}, {hi}]")
            out.append(int(v))
        return out

    def flag(self, cfg: dict, key: str, path: str, default: bool) -> bool:
        v = cfg.get(key, default)
        if not isinstance(v, bool):
            self.err(f"{path}.{key}", "must be true or false")
            return default
        return v

    def unknown(self, cfg: dict, allowed, path: str) -> None:
        for k in cfg:
            if k not in allowed:
                hint = Ms.closest_name(k, list(allowed))
                self.err(f"{path}.{k}" if path else k, f"unknown field (did you mean {hint!r}?)")


# -- built-in potentials --------------------------------------------------------------

@dataclass(frozen=True)
class PotentialDef:
    doc: str
    params: dict[str, tuple[str | None, Any]]  # name -> (dimension, default); lists broadcast per axis
    build: Callable[[dict, G.GridSpec], Callable]


def _harmonic(p, grid):
    k = p["mass"] * p["omega"] ** 2
    c = p["center"] * grid.d if len(p["center"]) == 1 else p["center"]
    return lambda *x: sum(0.5 * k * (xi - ci) ** 2 for xi, ci in zip(x, c))


def _eckart(p, grid):
    f = Ms.eckart_potential(p["V0"], p["alpha"], p["center"])
    return lambda *x: f(x[0])


def _double_well(p, grid):
    return lambda *x: p["V0"] * ((x[0] / p["a"]) ** 2 - 1) ** 2


def _coulomb(p, grid):
    q, s2 = p["charges"], p["softening"] ** 2

    def V(*x):
        tot = 0.0
        for i in range(len(q)):
            for j in range(i + 1, len(q)):
                tot = tot + q[i] * q[j] / np.sqrt((x[i] - x[j]) ** 2 + s2)
        return tot
    return V


POTENTIALS: dict[str, PotentialDef] = {
    "harmonic": PotentialDef("0.5 mass omega^2 |x - center|^2 (omega as an energy, hbar = 1)",
                             {"omega": ("energy", 1.0), "mass": ("mass", 1.0), "center": ("length", [0.0])},
                             _harmonic),
    "eckart": PotentialDef("V0 sech^2(alpha (x - center)) along axis 0",
                           {"V0": ("energy", 1.0), "alpha": ("inverse_length", 1.0), "center": ("length", 0.0)},
                           _eckart),
    "double-well": PotentialDef("V0 ((x / a)^2 - 1)^2 along axis 0; minima at +-a, barrier V0",
                                {"V0": ("energy", 1.0), "a": ("length", 1.0)}, _double_well),
    "coulomb-pairwise": PotentialDef(
        "sum_{i<j} q_i q_j / r_ij, one grid axis per 1D particle; classical propagation softens r with "
        "'softening', circuit runs use the Newton-Raphson Coulomb oracle (grid n must equal plan m)",
        {"charges": (None, [1.0, 1.0]), "softening": ("length", 1.0), "energy_unit": ("energy", 1.0)},
        _coulomb),
}

AUDIT_KINDS = ("add", "cadd", "mul", "r2", "inv_sqrt", "coulomb")


# -- example configs (one per kind; also used by the test suite) ---------------------

EXAMPLES: dict[str, dict] = {
    "propagate": {
        "schema_version": 1, "kind": "propagate", "seed": 0,
        "grid": {"n": 8, "d": 1, "extent": [[-10.0, 10.0]]},
        "potential": {"name": "double-well", "V0": 0.05, "a": 2.0},
        "masses": 1.0,
        "initial": {"type": "gaussian", "center": -2.0, "momentum": 0.0, "sigma": 0.7},
        "dt": 0.05, "steps": 400, "snapshot_every": 100, "split": 0.0,
    },
    "compare": {
        "schema_version": 1, "kind": "compare", "seed": 0,
        "grid": {"n": 5, "d": 1, "extent": [[-7.0, 7.0]]},
        "potential": {"name": "harmonic", "omega": 1.0},
        "masses": 1.0,
        "initial": {"type": "gaussian", "center": 1.0, "momentum": 0.0, "sigma": 1.0},
        "plan": {"m": 6, "steps": 20},
        "snapshot_every": 5,
    },
    "arithmetic-audit": {"schema_version": 1, "kind": "arithmetic-audit", "circuits": ["add", "cadd", "mul"],
                         "m": [4]},
    "resources": {
        "schema_version": 1, "kind": "resources",
        "gate_budget": 1000000000, "qubit_budget": 300, "n": 10, "m": 10, "steps": 1000, "b_max": 30,
        "fig2b_m": [10, 20],
        "crossover": {"Z": [1, 10, 100], "K": 15, "m": 20, "step_ratio": 1000, "atoms": [3, 10]},
    },
    "rate": {
        "schema_version": 1, "kind": "rate", "seed": 7,
        "barrier": {"V0": 1.0, "alpha": 1.0, "mass": 1.0},
        "grid": {"n": 11, "half_width": 150.0}, "packet": {"start": -30.0, "sigma": 4.0},
        "dt": 0.02, "t_max": 300.0,
        "thermal": {"kT": 0.4, "e_max": 3.0, "dE": 0.1, "e0": 0.05, "levels": [[0, 0.0], [1, 0.4]]},
        "samples": 2000,
        "convergence": {"sizes": [100, 400, 1600], "repeats": 20},
    },
    "state-to-state": {
        "schema_version": 1, "kind": "state-to-state",
        "grid": {"n": 7, "d": 1, "extent": [[-8.0, 8.0]]},
        "well": {"omega": 1.0, "mass": 1.0, "center": 0.0},
        "weights": {"0": 0.6, "1": 0.4}, "mixture": True, "vmax": 5,
    },
    "phase-estimate": {
        "schema_version": 1, "kind": "phase-estimate", "seed": 0,
        "grid": {"n": 7, "d": 1, "extent": [[-8.0, 8.0]]},
        "potential": {"name": "harmonic", "omega": 1.0},
        "masses": 1.0, "dt": 0.25, "t": 8, "states": [0, 1], "shots": 0,
    },
}

KIND_DOCS = {
    "propagate": "classical split-operator propagation of a wavepacket; snapshots, <x>, region probabilities",
    "compare": "gate-level phase-kickback evolution vs the classical oracle with the same quantized tables",
    "arithmetic-audit": "rotation-class gate tallies of the arithmetic circuits vs the closed-form counts",
    "resources": "qubit/gate scans, feasibility frontier and Born-Oppenheimer crossover (figure data)",
    "rate": "thermal rate constant: Monte Carlo over (zeta, E) bins vs deterministic quadrature",
    "state-to-state": "vibrational populations of a harmonic well, with completeness residual",
    "phase-estimate": "phase-estimation histograms of harmonic eigenstates under one split step",
}


def catalog() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "potentials": {name: {"doc": p.doc,
                              "params": {k: {"dimension": d, "default": v} for k, (d, v) in p.params.items()}}
                       for name, p in POTENTIALS.items()},
        "scenarios": {k: {"doc": KIND_DOCS[k], "example": EXAMPLES[k]} for k in EXAMPLES},
        "units": {dim: sorted(t) for dim, t in UNITS.items()},
        "audit_circuits": list(AUDIT_KINDS),
        "exit_codes": {"ok": EXIT_OK, "validation": EXIT_VALIDATION, "resource_cap": EXIT_RESOURCE,
                       "numerical_contract": EXIT_NUMERICAL},
    }


# -- validation --------------------------------------------------------------------

@dataclass
class Scenario:
    kind: str
    seed: int
    params: dict
    config: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def hash(self) -> str:
        return scenario_hash(self.config)


def scenario_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _grid(c: _Checker, cfg: dict, path: str = "grid") -> G.GridSpec | None:
    g = c.section(cfg, "grid")
    c.unknown(g, ("n", "d", "extent"), path)
    n = c.integer(g, "n", path, lo=1, hi=24)
    d = c.integer(g, "d", path, default=1, lo=1, hi=3)
    ext = g.get("extent")
    if not isinstance(ext, list) or not ext:
        return c.err(f"{path}.extent", "required: [[lo, hi], ...] per axis")
    if all(not isinstance(e, list) for e in ext):
        ext = [ext]
    if d is not None and len(ext) == 1:
        ext = ext * d
    if d is not None and len(ext) != d:
        return c.err(f"{path}.extent", f"needs {d} [lo, hi] pairs")
    bounds = []
    for i, e in enumerate(ext):
        if not isinstance(e, list) or len(e) != 2:
            return c.err(f"{path}.extent[{i}]", "must be [lo, hi]")
        lo = c.quantity(e[0], f"{path}.extent[{i}][0]", "length")
        hi = c.quantity(e[1], f"{path}.extent[{i}][1]", "length")
        if lo is None or hi is None:
            return None
        if hi <= lo:
            return c.err(f"{path}.extent[{i}]", "hi must exceed lo")
        bounds.append((lo, hi))
    if n is None or d is None:
        return None
    if n * d > 24:
        return c.err(path, f"n*d = {n * d} exceeds 24 qubits of grid")
    return G.GridSpec(n, d, tuple(bounds))


def _potential(c: _Checker, cfg: dict, grid: G.GridSpec | None, base_dir: Path, path: str = "potential"):
    p = c.section(cfg, "potential")
    if not p:
        return None
    if "table_csv" in p:
        c.unknown(p, ("table_csv",), path)
        f = base_dir / str(p["table_csv"])
        try:
            with open(f, newline="") as fh:
                rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        except OSError as e:
            return c.err(f"{path}.table_csv", f"cannot read {f}: {e.strerror}")
        try:
            if rows and not rows[0][-1].strip().lstrip("-").isdigit():
                rows = rows[1:]
            vals = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        except ValueError:
            return c.err(f"{path}.table_csv", "table entries must be integers")
        if grid is not None and vals.size != grid.n_points:
            return c.err(f"{path}.table_csv", f"table has {vals.size} entries, grid has {grid.n_points} points")
        return {"name": "table", "table": vals}
    name = p.get("name")
    if name not in POTENTIALS:
        hint = Ms.closest_name(str(name), list(POTENTIALS))
        return c.err(f"{path}.name", f"unknown potential {name!r} (nearest built-in: {hint!r})")
    spec = POTENTIALS[name]
    c.unknown(p, ("name",) + tuple(spec.params), path)
    out: dict[str, Any] = {"name": name}
    for k, (dim, default) in spec.params.items():
        if isinstance(default, list):
            out[k] = c.numbers(p, k, path, dim, default=default)
        else:
            out[k] = c.num(p, k, path, dim, default=default)
    if name == "harmonic" and out.get("omega") is not None and out["omega"] <= 0:
        c.err(f"{path}.omega", "must be positive")
    if name == "double-well" and out.get("a") is not None and out["a"] <= 0:
        c.err(f"{path}.a", "must be positive")
    if name == "coulomb-pairwise" and grid is not None and out.get("charges") is not None:
        if len(out["charges"]) != grid.d:
            c.err(f"{path}.charges", f"one charge per grid axis ({grid.d})")
        if len(out["charges"]) < 2:
            c.err(f"{path}.charges", "need at least two particles")
    if name == "harmonic" and grid is not None and out.get("center") is not None \
            and len(out["center"]) not in (1, grid.d):
        c.err(f"{path}.center", f"needs 1 or {grid.d} entries")
    return out


def _initial(c: _Checker, cfg: dict, grid: G.GridSpec | None, masses, path: str = "initial"):
    p = c.section(cfg, "initial")
    if not p or grid is None:
        return None
    kind = p.get("type", "gaussian")
    if kind == "gaussian":
        c.unknown(p, ("type", "center", "momentum", "sigma"), path)
        center = c.numbers(p, "center", path, "length", length=grid.d)
        mom = c.numbers(p, "momentum", path, "momentum", default=0.0, length=grid.d)
        sigma = c.numbers(p, "sigma", path, "length", length=grid.d, positive=True)
        if None in (center, mom, sigma):
            return None
        try:
            return gaussian_packet(WavepacketSpec(tuple(center), tuple(mom), tuple(sigma)), grid)
        except ValueError as e:
            return c.err(path, str(e))
    if kind == "eigenstate":
        c.unknown(p, ("type", "v", "omega", "center"), path)
        v = c.integer(p, "v", path, lo=0, hi=60)
        omega = c.num(p, "omega", path, "energy", positive=True)
        center = c.num(p, "center", path, "length", default=0.0)
        if None in (v, omega, masses):
            return None
        if grid.d != 1:
            return c.err(path, "eigenstate initial states need a 1D grid")
        try:
            return harmonic_eigenstate(v, omega, masses[0], grid, center)
        except ValueError as e:
            return c.err(path, str(e))
    return c.err(f"{path}.type", f"unknown initial state {kind!r} (expected 'gaussian' or 'eigenstate')")


COMMON = ("schema_version", "kind", "seed")


def validate(config: dict, base_dir: Path | str | None = None, seed: int | None = None) -> Scenario:
    """Resolve units and check every field; raises :class:`ConfigError` with field paths."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    c = _Checker()
    if not isinstance(config, dict):
        raise ConfigError([("", "config must be a JSON object")])
    config = dict(config)
    if seed is not None:
        config["seed"] = seed
    ver = config.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        c.err("schema_version", f"unsupported schema version {ver!r} (expected {SCHEMA_VERSION})")
    kind = config.get("kind")
    if kind not in EXAMPLES:
        hint = Ms.closest_name(str(kind), list(EXAMPLES))
        raise ConfigError(c.errors + [("kind", f"unknown scenario kind {kind!r} (nearest: {hint!r})")])
    s = c.integer(config, "seed", "", default=0, lo=0)
    p: dict[str, Any] = {}

    if kind in ("propagate", "compare", "phase-estimate"):
        grid = _grid(c, config)
        p["grid"] = grid
        p["potential"] = _potential(c, config, grid, base_dir)
        p["masses"] = c.numbers(config, "masses", "", "mass", default=1.0, length=grid.d if grid else None,
                                positive=True)
    if kind == "propagate":
        c.unknown(config, COMMON + ("grid", "potential", "masses", "initial", "dt", "steps", "snapshot_every",
                                    "split"), "")
        if p["potential"] and p["potential"]["name"] == "table":
            c.err("potential.table_csv", "integer tables drive circuit runs; use a 'compare' scenario")
        p["initial"] = _initial(c, config, p["grid"], p["masses"])
        p["dt"] = c.num(config, "dt", "", "time", positive=True)
        p["steps"] = c.integer(config, "steps", "", lo=1, hi=10 ** 6)
        p["snapshot_every"] = c.integer(config, "snapshot_every", "", default=p["steps"] or 1, lo=1)
        p["split"] = c.num(config, "split", "", "length", default=None) if "split" in config else None
    elif kind == "compare":
        c.unknown(config, COMMON + ("grid", "potential", "masses", "initial", "plan", "snapshot_every"), "")
        p["initial"] = _initial(c, config, p["grid"], p["masses"])
        plan = c.section(config, "plan")
        c.unknown(plan, ("m", "steps", "dt", "kinetic"), "plan")
        p["m"] = c.integer(plan, "m", "plan", lo=1, hi=20)
        p["steps"] = c.integer(plan, "steps", "plan", lo=0, hi=10 ** 5)
        p["dt"] = c.num(plan, "dt", "plan", "time", default=None, positive=True) if "dt" in plan else None
        p["kinetic"] = c.flag(plan, "kinetic", "plan", True)
        p["snapshot_every"] = c.integer(config, "snapshot_every", "", default=max(p["steps"] or 1, 1), lo=1)
        pot = p["potential"]
        if pot and pot["name"] == "coulomb-pairwise" and p["grid"] and p["m"] and p["grid"].n != p["m"]:
            c.err("plan.m", f"the Coulomb oracle needs plan.m equal to grid.n ({p['grid'].n})")
        if pot and pot["name"] == "table" and p["kinetic"] and p["dt"] is None:
            c.err("plan.dt", "a table potential with a kinetic term needs an explicit dt")
    elif kind == "phase-estimate":
        c.unknown(config, COMMON + ("grid", "potential", "masses", "dt", "t", "states", "shots"), "")
        if p["potential"] and p["potential"]["name"] != "harmonic":
            c.err("potential.name", "phase-estimate uses harmonic eigenstates; potential must be 'harmonic'")
        if p["grid"] and p["grid"].d != 1:
            c.err("grid.d", "phase-estimate needs a 1D grid")
        p["dt"] = c.num(config, "dt", "", "time", positive=True)
        p["t"] = c.integer(config, "t", "", lo=1, hi=14)
        p["states"] = c.int_list(config, "states", "", lo=0, hi=60)
        p["shots"] = c.integer(config, "shots", "", default=0, lo=0)
        pot = p["potential"]
        if not c.errors and pot:
            w, mass = _effective_oscillator(pot, p["masses"][0])
            for i, v in enumerate(p["states"]):
                try:
                    harmonic_eigenstate(v, w, mass, p["grid"], pot["center"][0])
                except ValueError as e:
                    c.err(f"states[{i}]", str(e))
    elif kind == "arithmetic-audit":
        c.unknown(config, COMMON + ("circuits", "m"), "")
        circ = config.get("circuits", list(AUDIT_KINDS))
        if not isinstance(circ, list) or not circ:
            c.err("circuits", "must be a non-empty list")
            circ = []
        for i, k in enumerate(circ):
            if k not in AUDIT_KINDS:
                c.err(f"circuits[{i}]", f"unknown circuit {k!r} (nearest: {Ms.closest_name(str(k), AUDIT_KINDS)!r})")
        p["circuits"] = circ
        p["m"] = c.int_list(config, "m", "", lo=2, hi=32)
    elif kind == "resources":
        c.unknown(config, COMMON + ("gate_budget", "qubit_budget", "n", "m", "steps", "b_max", "fig2b_m",
                                    "crossover"), "")
        for k in ("gate_budget", "qubit_budget", "n", "m", "steps"):
            p[k] = c.integer(config, k, "", lo=1)
        p["b_max"] = c.integer(config, "b_max", "", default=60, lo=3, hi=10 ** 4)
        p["fig2b_m"] = c.int_list(config, "fig2b_m", "", default=[p["m"] or 10], lo=2)
        if p["m"] is not None and p["m"] < 2:
            c.err("m", "must be >= 2")
        x = c.section(config, "crossover", required=False)
        c.unknown(x, ("Z", "K", "m", "step_ratio", "atoms"), "crossover")
        p["Z"] = c.int_list(x, "Z", "crossover", default=[1, 10, 100], lo=1)
        p["K"] = c.integer(x, "K", "crossover", default=15, lo=2)
        p["xm"] = c.integer(x, "m", "crossover", default=20, lo=2)
        p["step_ratio"] = c.integer(x, "step_ratio", "crossover", default=R.DEFAULT_STEP_RATIO, lo=1)
        atoms = c.int_list(x, "atoms", "crossover", default=[3, 10], lo=3)
        if atoms is not None and (len(atoms) != 2 or atoms[1] < atoms[0]):
            c.err("crossover.atoms", "must be [first, last] with first <= last")
        p["atoms"] = atoms
    elif kind == "rate":
        c.unknown(config, COMMON + ("barrier", "grid", "packet", "dt", "t_max", "thermal", "samples",
                                    "convergence"), "")
        b = c.section(config, "barrier")
        c.unknown(b, ("V0", "alpha", "mass"), "barrier")
        g = c.section(config, "grid")
        c.unknown(g, ("n", "half_width"), "grid")
        pk = c.section(config, "packet")
        c.unknown(pk, ("start", "sigma"), "packet")
        th = c.section(config, "thermal")
        c.unknown(th, ("kT", "e_max", "dE", "e0", "levels"), "thermal")
        model = dict(V0=c.num(b, "V0", "barrier", "energy", default=1.0, positive=True),
                     alpha=c.num(b, "alpha", "barrier", "inverse_length", default=1.0, positive=True),
                     mass=c.num(b, "mass", "barrier", "mass", default=1.0, positive=True),
                     n=c.integer(g, "n", "grid", default=11, lo=4, hi=20),
                     half_width=c.num(g, "half_width", "grid", "length", default=150.0, positive=True),
                     start=c.num(pk, "start", "packet", "length", default=-30.0),
                     sigma=c.num(pk, "sigma", "packet", "length", default=4.0, positive=True),
                     dt=c.num(config, "dt", "", "time", default=0.02, positive=True),
                     t_max=c.num(config, "t_max", "", "time", default=300.0, positive=True))
        levels = th.get("levels", [[0, 0.0]])
        lv = []
        if not isinstance(levels, list) or not levels:
            c.err("thermal.levels", "must be a non-empty list of [zeta, energy]")
        else:
            for i, item in enumerate(levels):
                if not isinstance(item, list) or len(item) != 2:
                    c.err(f"thermal.levels[{i}]", "must be [zeta, energy]")
                    continue
                e = c.quantity(item[1], f"thermal.levels[{i}][1]", "energy")
                lv.append((item[0], e))
        thermal = dict(kT=c.num(th, "kT", "thermal", "energy", positive=True),
                       e_max=c.num(th, "e_max", "thermal", "energy", default=3.0),
                       dE=c.num(th, "dE", "thermal", "energy", default=0.1, positive=True),
                       e0=c.num(th, "e0", "thermal", "energy", default=None) if "e0" in th else None,
                       levels=tuple(lv))
        p["samples"] = c.integer(config, "samples", "", default=2000, lo=2)
        cv = c.section(config, "convergence", required=False)
        c.unknown(cv, ("sizes", "repeats"), "convergence")
        p["sizes"] = c.int_list(cv, "sizes", "convergence", lo=2) if cv else None
        p["repeats"] = c.integer(cv, "repeats", "convergence", default=20, lo=2) if cv else None
        if not c.errors:
            try:
                p["thermal"] = ThermalSpec(**thermal)
                p["thermal"].bins()
                p["model"] = RateModel(**model)
                grid = p["model"].grid()
                if model["start"] - 5 * model["sigma"] < -model["half_width"]:
                    c.err("packet.start", "packet starts within 5 sigma of the grid edge")
                if model["sigma"] < 2 * grid.dx[0]:
                    c.err("packet.sigma", f"below two grid spacings ({2 * grid.dx[0]:.4g})")
            except ValueError as e:
                c.err("thermal", str(e))
    elif kind == "state-to-state":
        c.unknown(config, COMMON + ("grid", "well", "weights", "mixture", "vmax"), "")
        grid = _grid(c, config)
        if grid is not None and grid.d != 1:
            c.err("grid.d", "state-to-state analysis uses a 1D well")
        w = c.section(config, "well")
        c.unknown(w, ("omega", "mass", "center"), "well")
        well = dict(omega=c.num(w, "omega", "well", "energy", default=1.0, positive=True),
                    mass=c.num(w, "mass", "well", "mass", default=1.0, positive=True),
                    center=c.num(w, "center", "well", "length", default=0.0))
        p["vmax"] = c.integer(config, "vmax", "", default=5, lo=0, hi=60)
        p["mixture"] = c.flag(config, "mixture", "", True)
        weights = config.get("weights")
        ws: dict[int, float] = {}
        if not isinstance(weights, dict) or not weights:
            c.err("weights", "must be an object mapping level v to a weight")
        else:
            for k, v in weights.items():
                try:
                    lvl = int(k)
                except ValueError:
                    c.err(f"weights.{k}", "keys must be integer levels")
                    continue
                val = c.quantity(v, f"weights.{k}")
                if val is not None and val < 0:
                    c.err(f"weights.{k}", "must be non-negative")
                elif val is not None:
                    ws[lvl] = val
            if ws and sum(ws.values()) <= 0:
                c.err("weights", "need a positive total weight")
        p["grid"], p["well"], p["weights"] = grid, well, ws
        if not c.errors:
            for lvl in ws:
                if p["vmax"] is not None and lvl > p["vmax"]:
                    c.err(f"weights.{lvl}", f"level exceeds vmax={p['vmax']}")
                try:
                    harmonic_eigenstate(lvl, well["omega"], well["mass"], grid, well["center"])
                except ValueError as e:
                    c.err(f"weights.{lvl}", str(e))
            if p["vmax"] is not None:
                try:
                    harmonic_eigenstate(p["vmax"], well["omega"], well["mass"], grid, well["center"])
                except ValueError as e:
                    c.err("vmax", str(e))

    if c.errors:
        raise ConfigError(c.errors)
    return Scenario(kind, s, p, config, base_dir)


# -- runners -----------------------------------------------------------------------

Writer = Callable[[Path], None]


@dataclass
class RunResult:
    metrics: dict
    outputs: list[tuple[str, Writer]] = field(default_factory=list)

    def add(self, name: str, fn: Writer) -> None:
        self.outputs.append((name, fn))


def _csv_writer(rows: list[dict]) -> Writer:
    def w(path: Path):
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            wr.writerows(rows)
    return w


def _plot(fn_name: str, *args, **kw) -> Writer:
    def w(path: Path):
        from . import plotting
        getattr(plotting, fn_name)(*args, path=path, **kw)
    return w


def _potential_fn(p: dict, grid: G.GridSpec):
    return POTENTIALS[p["name"]].build(p, grid)


def run_propagate(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    grid, V, masses = p["grid"], _potential_fn(p["potential"], p["grid"]), p["masses"]
    psi = p["initial"]
    rm = Ms.RegionMap.split(p["split"], d=grid.d) if p["split"] is not None else None
    rows, snaps = [], [(0, psi)]

    def record(k, st):
        row = {"step": k, "t": k * p["dt"], "norm": st.norm()}
        for ax, v in enumerate(G.position_expectation(st)):
            row[f"x{ax}"] = float(v)
        if rm is not None:
            row["product_probability"] = Ms.region_probabilities(st, rm).get(1, 0.0)
        rows.append(row)

    record(0, psi)
    done = 0
    while done < p["steps"]:
        chunk = min(p["snapshot_every"], p["steps"] - done)
        psi = G.classical_split_step(psi, V, masses, p["dt"], chunk)
        done += chunk
        record(done, psi)
        snaps.append((done, psi))
    metrics = {"final_norm": psi.norm(), "final_position": [float(v) for v in G.position_expectation(psi)],
               "final_momentum": [float(v) for v in G.momentum_expectation(psi)],
               "boundary_probability": G.boundary_probability(psi), "steps": p["steps"], "dt": p["dt"]}
    if rm is not None:
        metrics["product_probability"] = rows[-1]["product_probability"]
    out = RunResult(metrics)
    out.add("expectations.csv", _csv_writer(rows))
    for k, st in snaps:
        out.add(f"psi_step{k:06d}.csv", lambda path, st=st: G.save_csv(st, path))
    if grid.d == 1:
        out.add("density.png", _plot("density_snapshots", snaps))
    return out


def _compare_plan(p: dict) -> K.KickbackPlan:
    grid, m, pot = p["grid"], p["m"], p["potential"]
    if pot["name"] == "table":
        s = K.scale_for_dt(p["dt"], m) if p["dt"] else None
        kin = K.TableSource(K.quantize_kinetic(grid, p["masses"], m, s).table) if p["kinetic"] else None
        return K.KickbackPlan(grid, m, K.TableSource(pot["table"]), kin, p["steps"], p["dt"], 0.0,
                              {"potential": "table"})
    if pot["name"] == "coulomb-pairwise":
        fmt = arith.CoulombFormat.default(m, h=float(grid.dx[0]), e_unit=pot["energy_unit"])
        s = 1.0 / pot["energy_unit"]
        dt = 2 * math.pi * s / (1 << m)
        kin = K.TableSource(K.quantize_kinetic(grid, p["masses"], m, s).table) if p["kinetic"] else None
        return K.KickbackPlan(grid, m, K.CoulombSource(fmt, pot["charges"]), kin, p["steps"], dt, 0.0,
                              {"potential": "coulomb-pairwise", "scale": s})
    V = _potential_fn(pot, grid)
    return K.physical_plan(grid, V, p["masses"], m, p["steps"], p["dt"], p["kinetic"],
                           meta={"potential": pot["name"]})


def run_compare(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    plan = _compare_plan(p)
    traj = K.evolve(plan, p["initial"], snapshot_every=p["snapshot_every"], qubit_cap=qubit_cap)
    fids = traj.fidelities
    report = traj.manifest()
    metrics = {
        "final_fidelity": traj.final_fidelity,
        "min_fidelity": min(fids),
        "max_separability_deviation": traj.max_separability_deviation,
        "qubits": plan.layout(cap=None).n_qubits,
        "gates_per_step": report["gates_per_step"],
        "dt": plan.dt,
        "m": plan.m,
        "steps": plan.steps,
        "plan_meta": {k: v for k, v in plan.meta.items()},
    }
    out = RunResult(metrics)
    rows = [{"step": s, "fidelity": f, "x_circuit": float(G.position_expectation(a)[0]),
             "x_oracle": float(G.position_expectation(b)[0])}
            for (s, a), f, (_, b) in zip(traj.snapshots, fids, traj.oracle_snapshots)]
    out.add("fidelity.csv", _csv_writer(rows))
    for k, st in traj.snapshots:
        out.add(f"psi_step{k:06d}.csv", lambda path, st=st: G.save_csv(st, path))
    out.add("fidelity.png", _plot("fidelity_curve", [r["step"] for r in rows], fids))
    if plan.grid.d == 1:
        out.add("density.png", _plot("density_snapshots", traj.snapshots, title="circuit snapshots"))
    return out


def run_audit(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    rows = [arith.audit_counts(k, m) for k in p["circuits"] for m in p["m"]]
    table = [{"kind": r["kind"], "m": r["m"], "measured": r["measured"], "formula": str(r["formula"]),
              "ratio": r["ratio"]} for r in rows]
    metrics = {"rows": table, "all_exact": all(r["measured"] == r["formula"] for r in rows)}
    out = RunResult(metrics)
    out.add("audit.csv", lambda path: arith.write_audit_csv(rows, path))
    out.add("audit.png", _plot("audit_bars", rows))
    return out


def _jsonable(v):
    return str(v) if isinstance(v, R.Fraction) else v


def run_resources(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    rep = R.feasibility_report(p["gate_budget"], p["qubit_budget"], p["n"], p["m"], p["steps"], p["b_max"])
    Bs = list(range(3, p["b_max"] + 1))
    a_rows = R.fig2a_rows(p["n"], p["m"], Bs)
    b_rows = R.fig2b_rows(p["fig2b_m"], Bs, p["steps"])
    lo, hi = p["atoms"]
    c_rows = R.fig3_rows(p["Z"], p["K"], p["xm"], range(lo, hi + 1), p["step_ratio"])
    cross = {}
    for Z in p["Z"]:
        try:
            cross[str(Z)] = R.crossover_atoms(Z, p["K"], p["xm"], p["step_ratio"])
        except ValueError:
            cross[str(Z)] = None
    front = rep.frontier_row()
    metrics = {
        "max_particles": rep.max_particles,
        "frontier_row": {k: _jsonable(v) for k, v in front.items()} if front else None,
        "gates_per_pair": {str(m): _jsonable(R.coulomb_gates_per_pair(m)) for m in sorted({p["m"], *p["fig2b_m"]})},
        "crossover_atoms": cross,
    }
    out = RunResult(metrics)
    out.add("feasibility.csv", lambda path: R.write_rows(rep.rows, path))
    out.add("fig2a.csv", lambda path: R.write_rows(a_rows, path))
    out.add("fig2b.csv", lambda path: R.write_rows(b_rows, path))
    out.add("fig3.csv", lambda path: R.write_rows(c_rows, path))
    out.add("fig2.png", _plot("fig2", a_rows, b_rows, qubit_budget=p["qubit_budget"], gate_budget=p["gate_budget"]))
    out.add("fig3.png", _plot("fig3", c_rows))
    return out


def run_rate(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    model, thermal = p["model"], p["thermal"]
    job = Ms.RateJob(thermal, model.reaction_probability, p["samples"], sc.seed)
    pr = Ms._CachedPr(job.reaction_probability)
    exact = Ms.rate_quadrature(thermal, pr)
    est = Ms.rate_constant(job, pr)
    metrics = {"rate_constant": est.as_record(sc.hash), "quadrature": exact,
               "deviation_sigma": abs(est.k - exact) / est.stderr if est.stderr > 0 else None}
    level_e = dict(thermal.levels)
    bins = [{"zeta": z, "E": E, "gamma2": g2, "P_r": pr(z, E - level_e[z])} for z, E, g2 in thermal.bins()]
    out = RunResult(metrics)
    out.add("bins.csv", _csv_writer(bins))
    if p["sizes"]:
        sizes, rms, slope = Ms.mc_convergence(job, p["sizes"], p["repeats"], exact, pr)
        metrics["convergence"] = {"sizes": [int(s) for s in sizes], "rms": [float(r) for r in rms], "slope": slope}
        out.add("convergence.csv", _csv_writer([{"samples": int(s), "rms_error": float(r)} for s, r in zip(sizes, rms)]))
        out.add("convergence.png", _plot("convergence", sizes, rms, slope=slope))
    return out


def run_state_to_state(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    grid, wp = p["grid"], p["well"]
    well = Ms.HarmonicWell(wp["omega"], wp["mass"], wp["center"])
    total = sum(p["weights"].values())
    states = {v: harmonic_eigenstate(v, well.omega, well.mass, grid, well.center) for v in p["weights"]}
    if p["mixture"]:
        state = [(w / total, states[v]) for v, w in sorted(p["weights"].items())]
    else:
        amp = sum(math.sqrt(w / total) * states[v].amplitudes for v, w in p["weights"].items())
        state = G.normalized(grid, amp)
    res = Ms.state_to_state(state, well, p["vmax"])
    metrics = {"populations": {str(v): pv for v, pv in res.populations.items()}, "residual": res.residual,
               "total": res.total(), "flagged": res.flagged}
    out = RunResult(metrics)
    out.add("populations.csv", _csv_writer([{"v": v, "P": pv} for v, pv in res.populations.items()]))
    out.add("populations.png", _plot("populations", res))
    return out


def _effective_oscillator(pot: dict, particle_mass: float) -> tuple[float, float]:
    """(omega, mass) of the particle in the well: k = mass_pot omega_pot^2 fixes omega = sqrt(k / M)."""
    k = pot["mass"] * pot["omega"] ** 2
    return math.sqrt(k / particle_mass), particle_mass


def run_phase(sc: Scenario, qubit_cap: int) -> RunResult:
    p = sc.params
    grid, pot, dt = p["grid"], p["potential"], p["dt"]
    omega, mass = _effective_oscillator(pot, p["masses"][0])
    vph = np.exp(-1j * G.potential_on_grid(grid, _potential_fn(pot, grid)) * dt)
    tph = np.exp(-1j * G.kinetic_on_grid(grid, p["masses"]) * dt)

    def U(a):
        return np.fft.ifft(tph * np.fft.fft(vph * a, norm="ortho"), norm="ortho")

    rng = np.random.SeedSequence(sc.seed).spawn(len(p["states"]))
    hists, modal = {}, {}
    for v, ss in zip(p["states"], rng):
        job = Ms.PhaseEstimationJob(U, p["t"], p["shots"], int(ss.generate_state(1)[0]))
        h = Ms.phase_estimate(job, harmonic_eigenstate(v, omega, mass, grid, pot["center"][0]))
        hists[v], modal[v] = h, h.modal_bin()
    Rb = 1 << p["t"]
    expected = omega * dt / (2 * math.pi)
    gaps = []
    for a, b in zip(p["states"], p["states"][1:]):
        gap = ((modal[a] - modal[b]) % Rb) / Rb
        want = ((b - a) * expected) % 1.0
        gaps.append({"from": a, "to": b, "estimated": gap, "expected": want,
                     "error": abs(gap - want), "within_resolution": abs(gap - want) <= 1 / Rb})
    metrics = {"modal_bins": {str(v): b for v, b in modal.items()},
               "phases": {str(v): b / Rb for v, b in modal.items()}, "gaps": gaps, "resolution": 1 / Rb}
    out = RunResult(metrics)
    rows = [{"bin": i, **{f"P_v{v}": float(h.probabilities[i]) for v, h in hists.items()}} for i in range(Rb)]
    out.add("histograms.csv", _csv_writer(rows))
    for v, h in hists.items():
        out.add(f"histogram_v{v}.png", _plot("phase_histogram", h))
    return out


RUNNERS = {"propagate": run_propagate, "compare": run_compare, "arithmetic-audit": run_audit,
           "resources": run_resources, "rate": run_rate, "state-to-state": run_state_to_state,
           "phase-estimate": run_phase}


def _versions() -> dict:
    import matplotlib
    return {"qchemdyn": __version__, "numpy": np.__version__, "matplotlib": matplotlib.__version__,
            "python": platform.python_version()}


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, Fractions to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, R.Fraction):
        return str(x)
    return x


def execute(sc: Scenario, out_dir: Path | str, qubit_cap: int = DEFAULT_QUBIT_CAP, threads: int | None = None) -> dict:
    """Run a validated scenario and write manifest.json plus per-kind files into ``out_dir``."""
    res = RUNNERS[sc.kind](sc, qubit_cap)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": sc.kind,
        "scenario_hash": sc.hash,
        "seed": sc.seed,
        "qubit_cap": qubit_cap,
        "threads": threads,
        "versions": _versions(),
        "metrics": _clean(res.metrics),
        "outputs": sorted(["manifest.json"] + [n for n, _ in res.outputs]),
        "config": sc.config,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, fn in res.outputs:
        if Path(name).name != name:
            raise ValueError(f"output name {name!r} must be a plain file name")
        fn(out / name)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# -- command line ----------------------------------------------------------------------

def _load(path: str) -> tuple[dict, Path]:
    try:
        with open(path) as fh:
            return json.load(fh), Path(path).resolve().parent
    except OSError as e:
        raise ConfigError([("--config", f"cannot read {path}: {e.strerror}")])
    except json.JSONDecodeError as e:
        raise ConfigError([("--config", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")])


def _report_config_error(e: ConfigError) -> int:
    for path, msg in e.errors:
        print(f"validation error: {path or '<root>'}: {msg}", file=sys.stderr)
    return EXIT_VALIDATION


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qchemdyn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="validate and run a scenario config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="output directory (created; nothing is written elsewhere)")
    r.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    r.add_argument("--threads", type=int, default=None, help="recorded in the manifest; modules run single-threaded")
    r.add_argument("--qubit-cap", type=int, default=DEFAULT_QUBIT_CAP,
                   help=f"largest simulated circuit (default {DEFAULT_QUBIT_CAP})")
    v = sub.add_parser("validate", help="check a config and print its scenario hash")
    v.add_argument("--config", required=True)
    v.add_argument("--seed", type=int, default=None)
    lb = sub.add_parser("list-builtins", help="print the catalog of potentials, scenario kinds and units")
    lb.add_argument("--out", default=None, help="also write one example config per kind into this directory")
    ef = sub.add_parser("emit-figures", help="write the resource figure data (CSV) and plots")
    ef.add_argument("--out", required=True)
    ef.add_argument("--config", default=None, help="a 'resources' config; defaults to the built-in example")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-builtins":
            print(json.dumps(catalog(), indent=2, sort_keys=True))
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                for kind, ex in EXAMPLES.items():
                    with open(Path(args.out) / f"{kind}.json", "w") as fh:
                        json.dump(ex, fh, indent=2)
                        fh.write("\n")
            return EXIT_OK
        if args.command == "validate":
            cfg, base = _load(args.config)
            sc = validate(cfg, base, args.seed)
            print(json.dumps({"kind": sc.kind, "scenario_hash": sc.hash, "seed": sc.seed}))
            return EXIT_OK
        if args.command == "emit-figures":
            if args.config:
                cfg, base = _load(args.config)
            else:
                cfg, base = EXAMPLES["resources"], Path.cwd()
            sc = validate(cfg, base)
            if sc.kind != "resources":
                raise ConfigError([("kind", "emit-figures takes a 'resources' config")])
            m = execute(sc, args.out)
            print(json.dumps(m["metrics"], indent=2, sort_keys=True))
            return EXIT_OK
        cfg, base = _load(args.config)
        sc = validate(cfg, base, args.seed)
        if args.qubit_cap < 1:
            raise ConfigError([("--qubit-cap", "must be positive")])
        m = execute(sc, args.out, args.qubit_cap, args.threads)
        print(json.dumps({"kind": sc.kind, "scenario_hash": sc.hash, "metrics": m["metrics"]}, indent=2,
                         sort_keys=True))
        return EXIT_OK
    except ConfigError as e:
        return _report_config_error(e)
    except K.ResourceCapError as e:
        print(f"resource cap exceeded: {e}", file=sys.stderr)
        print(json.dumps(_clean(e.report), indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_RESOURCE
    except QubitCapError as e:
        print(f"resource cap exceeded: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (SeparabilityError, NotBasisError) as e:
        print(f"numerical contract violated: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
