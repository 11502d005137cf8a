import json
import subprocess
import sys
from pathlib import Path

import pytest

from fractalaw.cli import main, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "fractalaw" / "configs"


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def test_bundled_uniform_exits_zero(tmp_path):
    code = main(["converge", "--config", str(CONFIGS / "uniform.json"), "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["experiment"] == "converge"
    assert (tmp_path / "curves.csv").read_text().startswith("k,value,stderr,bound\n")


def test_malformed_json_exits_two(tmp_path):
    p = write(tmp_path, "{not json")
    assert main(["converge", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_missing_file_exits_two(tmp_path):
    assert main(["converge", "--config", str(tmp_path / "absent.json")]) == 2


def test_experiment_mismatch_exits_two(tmp_path):
    p = write(tmp_path, {"experiment": "selfsim", "spec": "uniform"})
    assert main(["converge", "--config", str(p)]) == 2


def test_hypothesis_violation_exits_three(tmp_path):
    law = {"type": "law", "branches": [{"p": 0.5, "A": 1.2, "b": 0.0}, {"p": 0.5, "A": 1.2, "b": 1.0}]}
    p = write(tmp_path, {"experiment": "converge", "spec": law, "depth": 3})
    assert main(["converge", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_failing_verdict_exits_one(tmp_path):
    p = write(
        tmp_path,
        {
            "experiment": "converge",
            "spec": "uniform",
            "depth": 6,
            "mu0": {"dirac": [0.0]},
            "limit": {"kind": "uniform", "points": 1024, "tolerance": 1e-9},
        },
    )
    code, rep = run_experiment(p, tmp_path / "o")
    assert code == 1
    assert not rep.find("limit_distance").passed
    assert json.loads((tmp_path / "o" / "report.json").read_text())["passed"] is False


def test_seed_override_changes_report(tmp_path):
    p = CONFIGS / "random_ratio_converge.json"
    run_experiment(p, tmp_path / "a", seed=1)
    run_experiment(p, tmp_path / "b", seed=2)
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["inputs"]["seed"] == 1 and b["inputs"]["seed"] == 2
    assert a["metrics"] != b["metrics"]


def test_threads_do_not_change_bytes(tmp_path):
    p = CONFIGS / "random_ratio_converge.json"
    run_experiment(p, tmp_path / "a", threads=1)
    run_experiment(p, tmp_path / "b", threads=4)
    for name in ("report.json", "curves.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "fractalaw.cli", "fixed-point", "--config", str(CONFIGS / "fixed_point.json"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert "PASS geometric_rate" in out.stderr


def test_unknown_experiment_rejected_by_parser():
    with pytest.raises(SystemExit) as exc:
        main(["nope", "--config", "x.json"])
    assert exc.value.code == 2
