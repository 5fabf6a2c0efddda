import csv
import json
import os
from fractions import Fraction

import pytest

from qchemdyn import arith, cli, kickback as K
from qchemdyn.qsim import SeparabilityError


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_catalog_contents_and_examples_validate():
    cat = cli.catalog()
    assert "coulomb-pairwise" in cat["potentials"]
    assert set(cat["scenarios"]) == set(cli.RUNNERS)
    for kind, entry in cat["scenarios"].items():
        sc = cli.validate(entry["example"])
        assert sc.kind == kind


def test_unknown_potential_names_nearest_match():
    cfg = dict(cli.EXAMPLES["compare"], potential={"name": "coulomb-pairwize"})
    with pytest.raises(cli.ConfigError) as e:
        cli.validate(cfg)
    (path, msg), = [x for x in e.value.errors if x[0] == "potential.name"]
    assert "coulomb-pairwise" in msg


def test_validation_reports_field_paths():
    cfg = {"kind": "compare", "grid": {"n": 0, "extent": [[1, -1]]}, "potential": {"name": "harmonic", "omga": 1},
           "plan": {"m": 6}, "initial": {"type": "gaussian", "center": 0, "sigma": 1}}
    with pytest.raises(cli.ConfigError) as e:
        cli.validate(cfg)
    paths = {p for p, _ in e.value.errors}
    assert {"grid.n", "grid.extent[0]", "potential.omga", "plan.steps"} <= paths
    with pytest.raises(cli.ConfigError):
        cli.validate({"kind": "propagat"})


def test_units_are_resolved_to_atomic_units():
    cfg = dict(cli.EXAMPLES["propagate"])
    cfg["grid"] = {"n": 8, "extent": [[{"value": -5.29177210903, "unit": "angstrom"}, 10.0]]}
    cfg["dt"] = {"value": 0.02418884326585747, "unit": "fs"}
    sc = cli.validate(cfg)
    assert sc.params["grid"].extent[0][0] == pytest.approx(-10.0)
    assert sc.params["dt"] == pytest.approx(1.0)
    cfg["dt"] = {"value": 1.0, "unit": "angstrom"}
    with pytest.raises(cli.ConfigError, match="not a time unit"):
        cli.validate(cfg)


def test_scenario_hash_is_canonical_and_seed_sensitive():
    a = cli.validate(cli.EXAMPLES["rate"])
    b = cli.validate(json.loads(json.dumps(cli.EXAMPLES["rate"], sort_keys=True)))
    assert a.hash == b.hash
    assert cli.validate(cli.EXAMPLES["rate"], seed=99).hash != a.hash


def test_audit_run_writes_formula_rows(tmp_path):
    cfg = {"kind": "arithmetic-audit", "circuits": ["add", "cadd", "mul"], "m": [4]}
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "audit.csv")))
    assert [r["kind"] for r in rows] == ["add", "cadd", "mul"]
    for r in rows:
        assert Fraction(r["formula"]) == arith.si_formula(r["kind"], 4)
        assert int(r["measured"]) == arith.audit_counts(r["kind"], 4)["measured"]
    assert (out / "audit.png").stat().st_size > 0


def test_resources_run_reports_frontier(tmp_path):
    out = tmp_path / "res"
    assert cli.main(["run", "--config", _write(tmp_path, cli.EXAMPLES["resources"]), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["metrics"]["max_particles"] == 10
    assert man["metrics"]["frontier_row"]["B"] == 10
    assert man["metrics"]["crossover_atoms"]["100"] == 5
    for f in ("fig2a.csv", "fig2b.csv", "fig3.csv", "fig2.png", "fig3.png", "feasibility.csv"):
        assert (out / f).exists()


def test_compare_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, cli.EXAMPLES["compare"])
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "manifest.json").read_text()
    assert a == (tmp_path / "b" / "manifest.json").read_text()
    man = json.loads(a)
    assert man["metrics"]["final_fidelity"] >= 0.999
    assert "time" not in json.dumps(man).lower().replace("t_max", "")


def test_resource_cap_exit_code_without_output(tmp_path, capsys):
    cfg = {"kind": "compare", "grid": {"n": 5, "d": 2, "extent": [[0, 32], [0, 32]]},
           "potential": {"name": "coulomb-pairwise", "charges": [1, 1]},
           "initial": {"type": "gaussian", "center": [10, 22], "sigma": [2, 2]}, "plan": {"m": 5, "steps": 1}}
    out = tmp_path / "cap"
    assert cli.main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == cli.EXIT_RESOURCE
    assert not out.exists()
    assert "qubits_required" in capsys.readouterr().err


def test_validation_exit_code(tmp_path, capsys):
    bad = dict(cli.EXAMPLES["compare"], potential={"name": "morse"})
    assert cli.main(["validate", "--config", _write(tmp_path, bad)]) == cli.EXIT_VALIDATION
    assert "potential.name" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{")
    assert cli.main(["validate", "--config", str(tmp_path / "broken.json")]) == cli.EXIT_VALIDATION


def test_numerical_contract_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SeparabilityError("ancilla entangled")
    monkeypatch.setattr(K, "evolve", boom)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", _write(tmp_path, cli.EXAMPLES["compare"]), "--out", str(out)]) == cli.EXIT_NUMERICAL
    assert not out.exists()


def test_table_csv_potential(tmp_path):
    (tmp_path / "v.csv").write_text("index,value\n" + "".join(f"{i},{(i * 7) % 64}\n" for i in range(32)))
    cfg = {"kind": "compare", "grid": {"n": 5, "extent": [[-7, 7]]}, "potential": {"table_csv": "v.csv"},
           "initial": {"type": "gaussian", "center": 0.0, "sigma": 1.0}, "plan": {"m": 6, "steps": 3, "dt": 0.1}}
    out = tmp_path / "t"
    assert cli.main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["metrics"]["final_fidelity"] > 0.999999
    (tmp_path / "v.csv").write_text("index,value\n0,1\n")
    with pytest.raises(cli.ConfigError, match="entries"):
        cli.validate(json.loads(open(tmp_path / "cfg.json").read()), tmp_path)


@pytest.mark.parametrize("kind", ["propagate", "state-to-state", "phase-estimate"])
def test_other_kinds_run(tmp_path, kind):
    out = tmp_path / kind
    assert cli.main(["run", "--config", _write(tmp_path, cli.EXAMPLES[kind]), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert sorted(os.listdir(out)) == man["outputs"]
    if kind == "state-to-state":
        assert man["metrics"]["populations"]["0"] == pytest.approx(0.6, abs=1e-6)
    if kind == "phase-estimate":
        assert all(g["within_resolution"] for g in man["metrics"]["gaps"])


def test_writes_only_into_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = _write(tmp_path, cli.EXAMPLES["state-to-state"])
    before = set(os.listdir(tmp_path))
    assert cli.main(["run", "--config", cfg, "--out", "o"]) == 0
    assert set(os.listdir(tmp_path)) - before == {"o"}


def test_list_builtins_and_emit_figures(tmp_path, capsys):
    assert cli.main(["list-builtins", "--out", str(tmp_path / "ex")]) == 0
    cat = json.loads(capsys.readouterr().out)
    assert cat["schema_version"] == 1
    for f in os.listdir(tmp_path / "ex"):
        cli.validate(json.loads((tmp_path / "ex" / f).read_text()))
    assert cli.main(["emit-figures", "--out", str(tmp_path / "figs")]) == 0
    assert (tmp_path / "figs" / "fig3.png").exists()
