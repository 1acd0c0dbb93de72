import json
import subprocess
import sys

import pytest

from shiftcal.cli import main


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["gen", "--out", str(out), "--classes", "3", "--n", "300", "--n-ood", "100", "--seed", "4"]) == 0
    return out


@pytest.fixture(scope="module")
def member_bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("members")
    assert main(["gen", "--out", str(out), "--classes", "3", "--n", "300", "--n-ood", "100",
                 "--members", "2", "--seed", "4"]) == 0
    return out


def test_gen_layout(bench):
    names = {p.name for p in bench.iterdir()}
    assert {"id_calib.jsonl", "id_test.jsonl", "shifted_test_0.jsonl", "ood_pool.jsonl", "config.json"} <= names
    assert json.loads((bench / "config.json").read_text())["class_count"] == 3


@pytest.mark.parametrize("extra", [[], ["--dac"], ["--ood-pool", "{b}/ood_pool.jsonl"]])
def test_fit_apply_eval(bench, tmp_path, capsys, extra):
    extra = [e.format(b=bench) for e in extra]
    model = tmp_path / "m.json"
    assert main(["fit", "--calib", str(bench / "id_calib.jsonl"), "--method", "TS", "--out", str(model)] + extra) == 0
    assert main(["apply", "--model", str(model), "--input", str(bench / "id_test.jsonl"),
                 "--out", str(tmp_path / "p.jsonl")]) == 0
    first = json.loads((tmp_path / "p.jsonl").read_text().splitlines()[0])
    assert sum(first["probs"]) == pytest.approx(1.0)
    capsys.readouterr()
    rel = tmp_path / "rel.csv"
    assert main(["eval", "--input", str(bench / "shifted_test_0.jsonl"), "--role", "shifted_test",
                 "--model", str(model), "--reliability", str(rel)]) == 0
    out = capsys.readouterr().out
    assert "ece" in out and "brier" in out
    assert rel.read_text().startswith("bin_lo,bin_hi,count,conf,acc")


def test_eval_ensemble(member_bench, capsys):
    assert {p.name for p in member_bench.iterdir()} >= {"member0", "member1"}
    members = ",".join(str(member_bench / f"member{m}" / "shifted_test_0.jsonl") for m in range(2))
    calibs = ",".join(str(member_bench / f"member{m}" / "id_calib.jsonl") for m in range(2))
    assert main(["eval", "--members", members, "--calib-members", calibs, "--role", "shifted_test",
                 "--ensemble-order", "post"]) == 0
    assert "ece" in capsys.readouterr().out


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["fit", "--calib", str(tmp_path / "missing.jsonl"), "--method", "TS", "--out", "x"]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["eval"]) == 2


def test_grid_and_stats(tmp_path, capsys):
    plan = {"datasets": [{"name": "toy", "synth": {"class_count": 3, "n_per_split": 200, "n_ood": 100}}],
            "calibrators": ["none", "TS", "TS+OOD"], "seeds": [0, 1, 2], "train": {"steps": 20}}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    assert main(["grid", "--plan", str(tmp_path / "plan.json"), "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    assert main(["stats", "--report", str(tmp_path / "r" / "results.csv")]) == 0
    out = capsys.readouterr().out
    assert "chi2" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "shiftcal", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "grid" in res.stdout
