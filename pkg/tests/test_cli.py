from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from diagbsde.cli import (EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VIOLATION, main,
                          run_validate)
from diagbsde.config import ConfigError, load_config, parse_config
from diagbsde.oracle import cole_hopf_value
from diagbsde.picard import load_fields
from diagbsde.suite import CASES, run_suite

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def tree(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


# -- config ------------------------------------------------------------------

def test_config_defaults_and_resolution():
    cfg = load_config(CONFIGS / "cole_hopf.json")
    assert cfg.simulation["basis_degree"] == 4 and cfg.run["tol"] == 1e-4
    res = cfg.resolved()
    assert res["simulation"]["M"] == 20000 and res["validation"]["R_y"] == 10.0
    assert cfg.box.R_y == 10.0
    assert load_config(CONFIGS / "strictly_quadratic.json").box.R_y == 2.0


@pytest.mark.parametrize("mutate, path", [
    (lambda t: t.pop("generator"), "generator"),
    (lambda t: t["generator"].update(components=[]), "generator.components"),
    (lambda t: t["constants"].update(kappa=1), "constants.kappa"),
    (lambda t: t["terminal"].update(components=["b1 +"]), "terminal.components[0]"),
    (lambda t: t["generator"].update(components=["z[1][1] *"]), "generator.components[0]"),
    (lambda t: t["simulation"].update(M=20001), "simulation.M"),
    (lambda t: t["simulation"].update(N=0), "simulation.N"),
    (lambda t: t["simulation"].update(steps=3), "simulation.steps"),
    (lambda t: t["run"].update(mode="fast"), "run.mode"),
    (lambda t: t["run"].update(theta=[1.5]), "run.theta"),
    (lambda t: t["run"].update(q=[1.0]), "run.q"),
    (lambda t: t["run"].update(max_iters=0), "run.max_iters"),
    (lambda t: t.update(validation={"R_y": -1}), "validation.R_y"),
    (lambda t: t["constants"].update(gamma_bar=5.0), "constants"),
])
def test_config_errors_name_the_field(mutate, path):
    t = tree("cole_hopf")
    mutate(t)
    with pytest.raises(ConfigError) as info:
        parse_config(t)
    assert info.value.path == path


def test_config_memory_budget(monkeypatch):
    monkeypatch.setenv("DIAGBSDE_MEMORY_BUDGET", "1000")
    with pytest.raises(ConfigError, match="memory budget"):
        parse_config(tree("cole_hopf"))


def test_load_config_bad_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


# -- validate ----------------------------------------------------------------

def test_validate_strictly_quadratic(capsys):
    assert main(["validate", str(CONFIGS / "strictly_quadratic.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "2.5" in out.splitlines()[-1]
    res = run_validate(load_config(CONFIGS / "strictly_quadratic.json"))
    for k in ("H1", "H2", "H3", "H4", "H5"):
        assert res["reports"][k]["violations"] == 0
    assert "2.5" in res["theorems"]


def test_validate_growth_example_and_require(tmp_path):
    res = run_validate(load_config(CONFIGS / "growth_in_y.json"))
    assert res["reports"]["H1"]["passed"] and res["reports"]["H2"]["passed"]
    out = tmp_path / "v.json"
    code = main(["validate", str(CONFIGS / "growth_in_y.json"), "--require", "H1,H2", "--json", str(out)])
    assert code == EXIT_OK and json.loads(out.read_text())["reports"]["H1"]["passed"]
    assert main(["validate", str(CONFIGS / "growth_in_y.json"), "--require", "h4"]) == EXIT_VIOLATION
    assert main(["validate", str(CONFIGS / "growth_in_y.json"), "--require", "H9"]) == EXIT_CONFIG


def test_validate_unbounded_convex():
    res = run_validate(load_config(CONFIGS / "unbounded_convex.json"))
    assert all(res["reports"][k]["passed"] for k in ("B1", "B2", "B3", "B4"))
    assert "2.8" in res["theorems"]


def test_validate_off_diagonal_counterexample(tmp_path):
    t = {"constants": {"n": 2, "d": 2, "lambda": 1.0, "delta": 0.5},
         "generator": {"components": [{"family": "off_diagonal_quadratic", "row": 2}, "0"]},
         "terminal": {"components": ["0", "0"], "bounded": True}}
    path = tmp_path / "off.json"
    path.write_text(json.dumps(t))
    res = run_validate(load_config(path))
    assert res["reports"]["H1"]["violations"] >= 1
    assert main(["validate", str(path), "--require", "H1"]) == EXIT_VIOLATION


def test_validate_empty_generator(tmp_path, capsys):
    t = tree("cole_hopf")
    t["generator"] = {}
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(t))
    assert main(["validate", str(path)]) == EXIT_CONFIG
    assert "generator.components" in capsys.readouterr().err


# -- bounds ------------------------------------------------------------------

def test_bounds(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert main(["bounds", str(CONFIGS / "stitched.json"), "--json", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["values"]["m0"] == 3 and data["values"]["eps_stitch"] == pytest.approx(1 / 3)
    assert "lemma41_i" in capsys.readouterr().out


# -- solve -------------------------------------------------------------------

def test_solve_zero_driver(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(CONFIGS / "zero_driver.json"), "--out", str(out), "--fields"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["Y0"]["mean"][0] - 1.0) <= 1e-12
    assert summary["converged"] and summary["seed"] == 0
    assert summary["config"]["simulation"]["M"] == 2000
    assert {e["name"] for e in summary["norms"]} >= {"s_inf", "bmo"}
    assert (out / "trace.csv").read_text().startswith("m,dY,dZ,ratio,seconds")
    fields = load_fields(out / "fields.bin")
    assert fields.Y.shape == (2000, 11, 1) and np.allclose(fields.Y, 1.0)


def test_solve_cole_hopf_matches_oracle(tmp_path):
    out = tmp_path / "ch"
    assert main(["solve", str(CONFIGS / "cole_hopf.json"), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    ref = cole_hopf_value(1.0, lambda b: np.clip(b, -3, 3), breakpoints=[-3, 3])
    assert abs(summary["Y0"]["mean"][0] - ref) <= 1e-2
    assert summary["exp_moment_check"]["2.0"]["holds"]


def test_solve_not_converged(tmp_path):
    out = tmp_path / "nc"
    assert main(["solve", str(CONFIGS / "not_converged.json"), "--out", str(out)]) == EXIT_NOT_CONVERGED
    assert len((out / "trace.csv").read_text().strip().split("\n")) == 2
    assert json.loads((out / "summary.json").read_text())["converged"] is False


def test_solve_plan_override(tmp_path):
    out = tmp_path / "plan"
    code = main(["solve", str(CONFIGS / "zero_driver.json"), "--out", str(out), "--plan", "0.3,0.6"])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "global" and summary["plan_nodes"] == [10, 6, 3, 0]


def test_solve_deterministic_across_threads(tmp_path):
    outs = []
    for threads in ("1", "4", "1"):
        out = tmp_path / f"t{threads}_{len(outs)}"
        main(["solve", str(CONFIGS / "not_converged.json"), "--out", str(out), "--deterministic",
              "--threads", threads])
        outs.append((out / "summary.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert b"timing" not in outs[0]


# -- verify ------------------------------------------------------------------

def test_verify_filter_and_unknown(tmp_path, capsys):
    out = tmp_path / "v.json"
    code = main(["verify", "--quick", "--case", "deterministic_ode", "--json", str(out)])
    assert code == EXIT_OK
    rows = json.loads(out.read_text())["cases"]
    assert [r["case"] for r in rows] == ["deterministic_ode"] and rows[0]["tol"] == 3e-2
    assert capsys.readouterr().out.startswith("PASS")
    assert main(["verify", "--case", "nonexistent"]) == EXIT_CONFIG


def test_verify_full_suite_passes():
    rows = run_suite()
    assert [r["case"] for r in rows] == list(CASES)
    assert all(r["passed"] for r in rows), rows
