import json
import subprocess
import sys

import numpy as np
import pytest

from sisenet.cli import main
from sisenet.synlik import read_chains


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("gen-events", "--out", root / "ev", "--nodes", 25, "--years", 2, "--seed", 1) == 0
    model = ["--events", root / "ev/events.csv", "--population", root / "ev/population.csv", "--calendar", "two-halves",
             "--record-every", 30]
    assert run("simulate", "--out", root / "sim", *model, "--seed", 3) == 0
    assert run("filter", "--out", root / "obs", "--trajectory", root / "sim/trajectory_0.csv", "--per-sample", 0.1) == 0
    return root, model


def test_pipeline_outputs(pipeline):
    root, model = pipeline
    assert (root / "ev/events.csv").read_text().startswith("time,kind,src,dst,count")
    assert (root / "obs/series.csv").read_text().startswith("quarter_start,positives,tests")
    manifest = json.loads((root / "sim/manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["config"]["seed"] == 3
    assert len(manifest["inputs"]["events"]["sha256"]) == 64
    assert run("summarize", "--out", root / "sum", "--series", root / "obs/series.csv") == 0
    assert (root / "sum/summary.csv").read_text().startswith("statistic,value,weight")


def test_inference_and_replay(pipeline, monkeypatch):
    root, model = pipeline
    obs = ["--per-sample", 0.1, "--observed", root / "obs/series.csv"]
    assert run("abc", "--out", root / "abc", *model, *obs, "--lower", 0.001, 0.01, 0.02, 0.05,
               "--upper", 0.01, 0.05, 0.1, 0.2, "--proposals", 20, "--accept-fraction", 0.2) == 0
    assert run("slam", "--out", root / "slam", *model, *obs, "--P", 2, "--n-train", 8, "--N", 4, "--R", 20,
               "--scaled-proposal", 0.02, "--i0", 4) == 0
    monkeypatch.setenv("SISENET_WORKERS", "2")
    assert run("slam", "--config", root / "slam/manifest.json", "--out", root / "slam2") == 0
    assert (root / "slam/chains.csv").read_bytes() == (root / "slam2/chains.csv").read_bytes()
    monkeypatch.delenv("SISENET_WORKERS")
    assert run("mis", "--out", root / "mis", *model, *obs, "--chains", root / "slam/chains.csv", "--burn-in", 2,
               "--n-sample", 6, "--N", 4, "--R", 20) == 0
    chains, names = read_chains(root / "mis/chains.csv")
    assert names == ["upsilon", "beta1", "beta2", "gamma"]
    assert {c.phase for c in chains} == {"MIS"} and len(chains) == 2
    assert run("bootstrap", "--out", root / "boot", *model, *obs, "--chains", root / "mis/chains.csv", "--m-boot", 2,
               "--n-train", 6, "--n-sample", 4, "--N", 4, "--R", 20, "--burn-in", 2, "--scaled-proposal", 0.02) == 0
    assert (root / "boot/error_report.csv").read_text().startswith("parameter,estimate,variance,bias,mse,nrmse")
    assert run("diagnose", "--out", root / "diag", "--chains", root / "slam/chains.csv") == 0
    diag = json.loads((root / "diag/diagnostics.json").read_text())
    assert "AM" in diag


def test_scenario_commands(pipeline):
    root, model = pipeline
    chains = root / "chains.csv"
    rng = np.random.default_rng(0)
    lines = ["replica,iter,phase,upsilon,beta1,beta2,gamma,log_sl,accepted"]
    for i in range(6):
        th = np.array([0.005, 0.025, 0.058, 0.1]) * (1 + 0.01 * rng.standard_normal(4))
        lines.append(f"0,{i},MIS," + ",".join(repr(float(v)) for v in th) + ",-1.0,1")
    chains.write_text("\n".join(lines) + "\n")
    assert run("detect", "--out", root / "det", *model, "--chains", chains, "--strategies", "indegree", "largest",
               "--size", 3, "--n-draws", 3, "--interval", 30) == 0
    assert (root / "det/detection.csv").read_text().startswith("day,set_or_strategy,mean,lo,hi")
    assert run("intervene", "--out", root / "iv", *model, "--chains", chains, "--pre-years", 1, "--post-years", 1,
               "--n-draws", 2, "--interval", 5, "--underflow", "clamp") == 0
    text = (root / "iv/reduction_factors.csv").read_text()
    assert text.startswith("strategy,year,mean,lo,hi") and "transport-clearing" in text


def test_unknown_flag_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as err:
        run("simulate", "--out", tmp_path, "--bogus", 1)
    assert err.value.code != 0


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nodes": 5, "colour": "red"}))
    with pytest.raises(SystemExit) as err:
        run("gen-events", "--config", cfg, "--out", tmp_path / "o")
    assert err.value.code != 0


def test_missing_input_marks_incomplete(tmp_path):
    code = run("summarize", "--out", tmp_path / "o", "--series", tmp_path / "missing.csv")
    assert code == 2
    assert (tmp_path / "o/.incomplete").exists()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "sisenet.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "sisenet" in out.stdout
