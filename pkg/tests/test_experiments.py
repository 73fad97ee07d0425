import csv
import io
import json

import numpy as np
import pytest

from homflow.cli import main
from homflow.experiments import (SCHEMAS, ExperimentConfig, antisymmetry_defect, emit_outputs, project_atoms, run,
                                 to_csv)
from homflow.geometry import GraphSpec, generate


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("nope")
    with pytest.raises(ValueError):
        ExperimentConfig("fhom_sweep", eps_list=[0.25, 0.5])
    with pytest.raises(ValueError):
        ExperimentConfig("fhom_sweep", eps_list=[2.0, 0.5])
    with pytest.raises(ValueError):
        ExperimentConfig("fhom_sweep", graph={"kind": "hexagonal", "dim": 2})


def test_config_json_roundtrip():
    cfg = ExperimentConfig("w1_convergence", eps_list=[0.5, 0.25], seeds=[3, 4], params={"pad": 0.75})
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_empty_run_writes_header_only(tmp_path):
    results = run(ExperimentConfig("corrector_bounds", seeds=[]))
    text = to_csv(results)
    assert text == ",".join(SCHEMAS["corrector_bounds"]) + "\n"
    paths = emit_outputs(results, str(tmp_path))
    assert open(paths["csv"]).read() == text


def test_runs_are_byte_reproducible(tmp_path):
    cfg = ExperimentConfig("corrector_bounds", graph={"kind": "jittered_lattice", "dim": 2, "jitter_amplitude": 0.25},
                           eps_list=[0.25, 0.125], seeds=[0, 1])
    a = emit_outputs(run(cfg), str(tmp_path / "a"))
    b = emit_outputs(run(cfg), str(tmp_path / "b"))
    for ext in ("csv", "json", "dat"):
        assert open(a[ext], "rb").read() == open(b[ext], "rb").read()
    rows = list(csv.DictReader(io.StringIO(open(a["csv"]).read())))
    assert len(rows) == 4 and all(float(r["divergence_error"]) <= 1e-10 for r in rows)


def test_property_suite_passes_and_catches_corruption():
    clean = run(ExperimentConfig("property_suite", seeds=[0]))
    assert clean["summary"]["passed"], [r for r in clean["rows"] if not r["passed"]]
    bad = run(ExperimentConfig("property_suite", seeds=[0], params={"corrupt": ["antisymmetry"]}))
    assert [r["check"] for r in bad["rows"] if not r["passed"]] == ["antisymmetry"]


def test_antisymmetry_defect():
    assert antisymmetry_defect({(0, 1): 2.0, (1, 0): -2.0}) == 0.0
    assert antisymmetry_defect({(0, 1): 2.0, (1, 0): -1.5}) == pytest.approx(0.5)


def test_project_atoms_ties_go_to_lowest_index():
    g = generate(GraphSpec("lattice_zd", 2, 0.0, 0, 3))
    m = project_atoms(g, [((0.5, 0.5), 1.0), ((2.0, 2.0), -1.0)])
    assert m.values[0, 0] == 1.0 and m.values[8, 0] == -1.0


def test_fhom_sweep_rows_carry_fingerprints():
    res = run(ExperimentConfig("fhom_sweep", eps_list=[0.5, 0.25, 0.125], j_list=[[1.0, 0.0]]))
    assert len(res["rows"]) == 3
    assert all(len(r["graph_fingerprint"]) == 16 and r["cost_fingerprint"] for r in res["rows"])
    (est,) = res["summary"].values()
    assert est["f_hom"] == pytest.approx(1.0, abs=1e-9)


def test_w1_on_lattice_matches_prediction():
    res = run(ExperimentConfig("w1_convergence", eps_list=[0.25, 0.125],
                               measures={"plus": [{"point": [0, 0], "mass": 1}],
                                         "minus": [{"point": [1, 1], "mass": 1}]},
                               params={"fhom_eps": [0.25, 0.125, 0.0625]}))
    s = res["summary"]["seed=0"]
    np.testing.assert_allclose(s["values"], [2.0, 2.0])
    assert s["predicted"] == pytest.approx(2.0)


@pytest.mark.parametrize("argv", [
    ["gen-graph", "--kind", "jittered_lattice", "--jitter", "0.2", "--size", "6"],
    ["solve", "--size", "6", "--m", '[{"point": [1, 1], "value": 1}, {"point": [4, 2], "value": -1}]'],
    ["uniform-flow", "--size", "10"],
    ["corrector", "--size", "8", "--m", '[{"point": [1, 1], "value": 2}, {"point": [5, 6], "value": -2}]'],
    ["fhom", "--eps", "0.5,0.25,0.125", "--j", "1,1"],
    ["w1", "--eps", "0.5,0.25"],
])
def test_cli_commands_succeed(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip()
    assert any(tmp_path.iterdir())


def test_cli_suite_with_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seeds": [1], "params": {"size": 6}}))
    assert main(["suite", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "suite.csv").exists()


def test_cli_failing_check_exits_nonzero(tmp_path):
    # a corrupted antisymmetry record makes the suite fail
    cfg = json.dumps({"seeds": [0], "params": {"size": 6, "corrupt": ["antisymmetry"]}})
    assert main(["suite", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
