import csv
import io
import json
import subprocess
import sys

import pytest

from dfslearn import cli
from dfslearn.io import read_dataset
from dfslearn.schemas import validate

SMALL = ["-S", "6", "--S-test", "4", "-N", "8", "--epochs", "3", "--restarts", "1"]


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def load(path):
    return json.loads(path.read_text())


def test_enumerate_counts(tmp_path, capsys):
    assert run(tmp_path, "enumerate", "--n", "4") == 0
    data = load(tmp_path / "structures.json")
    assert len(data["ordered"]) == 18 and len(data["canonical"]) == 11
    assert "11 up to block permutation" in capsys.readouterr().out
    validate(load(tmp_path / "manifest.json"), "manifest")


def test_hierarchy_edges(tmp_path):
    assert run(tmp_path, "hierarchy", "--n", "4") == 0
    edges = load(tmp_path / "hierarchy.json")["edges"]
    assert ["({2,1}^2)", "({2,2})"] in edges or ["({2,2})", "({2,1}^2)"] in edges
    assert "digraph" in (tmp_path / "hierarchy.dot").read_text()


def test_gen_data_writes_readable_sets(tmp_path):
    assert run(tmp_path, "gen-data", "--structure", "({1,2},{1,1})", "-S", "3", "-N", "5", "--seed", "4") == 0
    tr = read_dataset(tmp_path / "train.jsonl")
    assert len(tr) == 3 and tr.n == 3 and len(tr.chains[0]) == 5


def test_gen_data_restricted_postselect(tmp_path):
    assert run(tmp_path, "gen-data", "--structure", "({1,3})", "--accessible", "n0=1;{2,1}",
               "--postselect", "-S", "2", "-N", "4") == 0
    assert read_dataset(tmp_path / "test.jsonl").accessible_structure.n0 == 1


def test_train_then_train_on_files(tmp_path):
    assert run(tmp_path / "a", "train", "--structure", "({1,2})", *SMALL) == 0
    validate(load(tmp_path / "a" / "report.json"), "train_report")
    assert run(tmp_path / "d", "gen-data", "--structure", "({1,2})", "-S", "3", "-N", "4") == 0
    assert run(tmp_path / "b", "train", "--model", "({2,1})", "--train-data", str(tmp_path / "d" / "train.jsonl"),
               "--test-data", str(tmp_path / "d" / "test.jsonl"), "--epochs", "2", "--restarts", "1") == 0


def test_scan_outputs_and_report_gap(tmp_path, capsys):
    assert run(tmp_path, "scan", "--structure", "({1,2})", *SMALL) == 0
    scan = load(tmp_path / "scan.json")
    validate(scan, "scan_result")
    assert {r["label"] for r in scan["rows"]} == {"({1,2})", "({1,1}^2)", "({2,1})"}
    summary = load(tmp_path / "scan_summary.json")
    assert "frontier" in summary and "violations" in summary
    capsys.readouterr()
    assert run(tmp_path / "r", "report", str(tmp_path / "scan.json"), "--format", "csv") == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert "Gap" in rows[0]
    values = [float(r["F/N"]) for r in rows]
    gaps = [r["Gap"] for r in rows]
    assert float(gaps[1]) == pytest.approx(values[0] - values[1], abs=1e-4)


def test_sweeps_validate(tmp_path):
    assert run(tmp_path / "t", "tradeoff", "--structure", "({1,2})", "--lengths", "5", "10",
               "--scale", "0.001", "--epochs", "2", "--restarts", "1") == 0
    validate(load(tmp_path / "t" / "tradeoff.json"), "sweep")
    assert run(tmp_path / "r", "restricted", "--structure", "({1,3})", "--n0", "0", "1", *SMALL) == 0
    rows = load(tmp_path / "r" / "restricted.json")["rows"]
    assert [r[0] for r in rows] == [0, 1]


def test_waveguide_small(tmp_path):
    assert run(tmp_path, "waveguide", "--candidates", "({8,1})", "-S", "2", "-N", "3",
               "--epochs", "1", "--restarts", "1") == 0
    assert load(tmp_path / "scan_summary.json")["cptp"] is True


def test_verify(tmp_path, capsys):
    assert run(tmp_path, "verify") == 0
    assert all(v["passed"] for v in load(tmp_path / "verify.json").values())


@pytest.mark.parametrize("argv", [
    ["gen-data", "-S", "0"],
    ["train", "--structure", "({1,2)"],
    ["enumerate", "--n", "0"],
    ["restricted", "--structure", "({1,2})", "--n0", "5"],
    ["report"],
    ["scan", "--jobs", "0"],
    ["train", "--config", "missing.json"],
    ["train", "--epochs", "0"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    validate(record, "error")
    assert record["kind"] == "config"


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "enumerate", "--config", str(cfg)) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from dfslearn.training import TrainingFailed

    def boom(*a, **k):
        raise TrainingFailed("all restarts failed")

    monkeypatch.setattr(cli, "train", boom)
    assert run(tmp_path, "train", "--structure", "({1,2})", *SMALL) == 3
    assert load(tmp_path / "error.json")["exit_code"] == 3


def test_precedence_flag_over_env_over_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "n": 3}))
    monkeypatch.setenv("DFSLEARN_SEED", "2")
    assert run(tmp_path / "a", "enumerate", "--config", str(cfg)) == 0
    man = load(tmp_path / "a" / "manifest.json")
    assert man["seeds"]["seed"] == 2
    assert load(tmp_path / "a" / "structures.json")["n"] == 3
    assert run(tmp_path / "b", "enumerate", "--config", str(cfg), "--seed", "9") == 0
    assert load(tmp_path / "b" / "manifest.json")["seeds"]["seed"] == 9
    monkeypatch.setenv("DFSLEARN_OUT", str(tmp_path / "env"))
    assert cli.main(["enumerate"]) == 0
    assert (tmp_path / "env" / "structures.json").exists()


def test_same_seed_same_outputs(tmp_path):
    for d in ("a", "b"):
        assert run(tmp_path / d, "train", "--structure", "({1,2})", "--seed", "3", *SMALL) == 0
    assert load(tmp_path / "a" / "report.json") == load(tmp_path / "b" / "report.json")


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dfslearn.cli", "enumerate", "--n", "2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "({1,2})" in res.stdout
