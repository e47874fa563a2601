import json
import subprocess
import sys

import numpy as np
import pytest

from sorn.cli import main, resolve_config, build_parser, InvalidInput
from sorn.model import SornModel
from sorn.scoring import read_scores

SMALL = ["--T", "300", "--tasks-per-slot", "100", "--n-segments", "3", "--window-length", "12",
         "--epochs", "2", "--batch-size", "32", "--learning-rate", "0.01"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["generate", "--out", str(d), *SMALL]) == 0
    assert main(["train", "--series", str(d / "sync.csv"), "--out", str(d / "m.json"), *SMALL]) == 0
    assert main(["score", "--checkpoint", str(d / "m.json"), "--series", str(d / "sync.csv"),
                 "--out", str(d / "scores.csv"), *SMALL]) == 0
    assert main(["eval", "--scores", str(d / "scores.csv"), "--labels", str(d / "sync.labels.csv"),
                 "--out", str(d / "metrics.json"), *SMALL]) == 0
    return d


def test_pipeline_outputs(pipeline):
    d = pipeline
    for name in ("sync.csv", "sync.labels.csv", "sync.spec.json", "sync.run_config.json", "m.json",
                 "scores.csv", "metrics.json"):
        assert (d / name).exists(), name
    model = SornModel.load(d / "m.json")
    assert model.meta["train_slots"] == 210 and model.config.window_length == 12
    ts, sc, pr = read_scores(d / "scores.csv")
    assert len(ts) == 300 and np.isfinite(sc).all()
    m = json.loads((d / "metrics.json").read_text())
    assert 0 <= m["f1"] <= 1 and m["n_slots"] == 90
    assert "training" in m["threshold_provenance"]


def test_run_config_records_resolved_values(pipeline):
    rc = json.loads((pipeline / "sync.run_config.json").read_text())
    assert rc["command"] == "generate" and rc["config"]["T"] == 300


def test_export_plots(pipeline):
    out = pipeline / "plots"
    assert main(["export-plots", "--checkpoint", str(pipeline / "m.json"), "--series", str(pipeline / "sync.csv"),
                 "--out", str(out), "--labels", str(pipeline / "sync.labels.csv"), *SMALL]) == 0
    assert {p.name for p in out.glob("*.svg")} == {"scores.svg", "reconstruction.svg", "weights.svg"}


def test_scheme_mismatch_exits_2(pipeline, tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--scheme", "mustang", *SMALL]) == 0
    code = main(["score", "--checkpoint", str(pipeline / "m.json"), "--series", str(tmp_path / "sync.csv"),
                 "--out", str(tmp_path / "s.csv"), *SMALL])
    assert code == 2


def test_precedence_flag_over_set_over_file_over_env(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"epochs": 3, "seed": 5, "window_length": 30}))
    p = build_parser()
    args = p.parse_args(["generate", "--out", "x", "--config", str(cfg_file), "--set", "epochs=4",
                         "--set", "window_length=31", "--window-length", "32"])
    cfg = resolve_config(args, env={"SORN_SEED": "9"})
    assert (cfg["epochs"], cfg["window_length"], cfg["seed"]) == (4, 32, 5)
    cfg = resolve_config(p.parse_args(["generate", "--out", "x"]), env={"SORN_SEED": "9"})
    assert cfg["seed"] == 9
    assert resolve_config(p.parse_args(["generate", "--out", "x", "--lambda", "0.25"]), env={})["lam"] == 0.25


def test_bad_config_is_invalid_input(tmp_path):
    p = build_parser()
    with pytest.raises(InvalidInput, match="unknown"):
        resolve_config(p.parse_args(["generate", "--out", "x", "--set", "bogus=1"]), env={})
    assert main(["generate", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
    assert main(["generate", "--out", str(tmp_path), "--learning-rate", "-1"]) == 2
    assert main(["generate", "--out", str(tmp_path), "--set", "segments=[{\"start\":5,\"length\":5},"
                 "{\"start\":7,\"length\":3}]", "--T", "50"]) == 2
    assert main(["nonsense"]) == 2


def test_ingest_limits_and_empty_file(tmp_path, capsys):
    good = "".join(f"t{i},{i * 1.0},{10 + i % 7}\n" for i in range(200))
    ok = tmp_path / "ok.csv"
    ok.write_text("task_id,end_timestamp,duration_min\n" + good + "bad,row\n")
    assert main(["ingest", str(ok), "--out", str(tmp_path / "ok.series.csv")]) == 0
    rep = json.loads((tmp_path / "ok.series.ingest.json").read_text())
    assert rep["binned"] == 200 and rep["dropped"] == 1 and len(rep["malformed"]) == 1
    noisy = tmp_path / "noisy.csv"
    noisy.write_text("task_id,end_timestamp,duration_min\n" + good + "bad,row\n" * 5)
    assert main(["ingest", str(noisy), "--out", str(tmp_path / "n.csv")]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("task_id,end_timestamp,duration_min\n")
    assert main(["ingest", str(empty), "--out", str(tmp_path / "e.csv")]) == 0
    assert "no events" in capsys.readouterr().err
    assert main(["ingest", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.csv")]) == 2


def test_parallel_subsets_train_one_model_each(tmp_path):
    for stem, seed in (("a", "1"), ("b", "2")):
        assert main(["generate", "--out", str(tmp_path), "--stem", stem, "--seed", seed, *SMALL]) == 0
    assert main(["train", "--series", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
                 "--out", str(tmp_path / "models"), "--parallel-subsets", "2", *SMALL]) == 0
    assert sorted(p.name for p in (tmp_path / "models").glob("*.model.json")) == ["a.model.json", "b.model.json"]


def test_verify_theorems_and_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sorn", "verify-theorems", "--out", str(tmp_path / "t.json")],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    rep = json.loads((tmp_path / "t.json").read_text())
    assert rep["passed"] and rep["two_tone"]["max_rel_error"] <= 1e-6
