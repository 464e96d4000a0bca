import csv
import json
from importlib import resources

import numpy as np
import pytest

from spraysim import config
from spraysim.cli import main
from spraysim.netpbm import read_image, write_image

DATA = resources.files("spraysim.data")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--out", str(out)]) == 0
    assert main(["analyze", str(out)]) == 0
    return out


def test_simulate_outputs(run_dir):
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["manifest_version"] == 1
    assert len(list((run_dir / "rasters").glob("*.pgm"))) == 15
    for name in manifest["outputs"]:
        assert (run_dir / name).exists()
    assert {p["canopy_class"] for p in manifest["papers"]} == {"SMALL", "MEDIUM", "LARGE"}
    rows = list(csv.DictReader(open(run_dir / "decisions.csv")))
    assert {r["action"] for r in rows} == {"ON", "OFF"}


def test_analyze_writes_per_paper_reports(run_dir):
    a = run_dir / "analysis"
    assert len(list(a.glob("W*.json"))) == 15
    assert len(list(a.glob("W*_heatmap.pgm"))) == 15
    assert (a / "aggregate.csv").exists()


def test_report_structure(run_dir):
    assert main(["report", str(run_dir)]) == 0
    rows = list(csv.DictReader(open(run_dir / "report" / "boxplot_data.csv")))
    for cls in ("SMALL", "MEDIUM", "LARGE"):
        assert sum(r["canopy_class"] == cls for r in rows) == 5
    summary = (run_dir / "report" / "summary.txt").read_text()
    assert "16.22" in summary and "21.46" in summary and "21.65" in summary
    assert "PASS" in summary or "FAIL" in summary


def test_report_txt_format(run_dir, tmp_path):
    assert main(["report", str(run_dir), "--format", "txt", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "boxplot_summary.txt").exists()


def test_report_without_analysis_exits_2(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_invalid_config_exits_2(tmp_path, capsys):
    doc = json.loads(config.default_scenario_text())
    doc["control"] = {"t1": 0.03, "t2": 0.01}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc, indent=2))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "control" in capsys.readouterr().err


def test_empty_plants_scenario(tmp_path):
    doc = {"seed": 1, "papers": [{"id": "W1", "center": [1.0, 0.0]}]}
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "decisions.csv")))
    assert rows and all(r["action"] == "OFF" for r in rows)
    assert (read_image(out / "rasters" / "W1.pgm") == 255).all()


def test_env_overrides(tmp_path, monkeypatch):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"seed": 1, "papers": [{"id": "W1", "center": [0.5, 0.0]}]}))
    monkeypatch.setenv("SPRAYSIM_SEED", "9")
    monkeypatch.setenv("SPRAYSIM_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(path)]) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 9
    assert main(["simulate", "--config", str(path), "--seed", "3", "--out", str(tmp_path / "f")]) == 0
    assert json.loads((tmp_path / "f" / "manifest.json").read_text())["seed"] == 3


def test_analyze_blank_raster(tmp_path):
    write_image(tmp_path / "blank.pgm", np.full((60, 180), 255, np.uint8))
    out = tmp_path / "a"
    assert main(["analyze", str(tmp_path / "blank.pgm"), "--resolution", "42.3",
                 "--out", str(out)]) == 0
    report = json.loads((out / "blank.json").read_text())
    assert report["coverage_percent"] == 0.0 and report["droplet_count"] == 0


def test_analyze_mixed_paths_partial(tmp_path):
    write_image(tmp_path / "good.pgm", np.full((30, 90), 255, np.uint8))
    (tmp_path / "bad.pgm").write_bytes(b"not an image")
    out = tmp_path / "a"
    assert main(["analyze", str(tmp_path / "good.pgm"), str(tmp_path / "bad.pgm"),
                 "--resolution", "42.3", "--out", str(out)]) == 1
    assert (out / "good.json").exists() and not (out / "bad.json").exists()


def test_analyze_needs_resolution_without_manifest(tmp_path):
    write_image(tmp_path / "x.pgm", np.full((30, 90), 255, np.uint8))
    assert main(["analyze", str(tmp_path / "x.pgm"), "--out", str(tmp_path / "a")]) == 1


def test_eval_bundled_fixture(tmp_path):
    pred, truth = DATA / "eval_predictions.txt", DATA / "eval_truths.txt"
    assert main(["eval", str(pred), str(truth), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "eval_report.json").read_text())
    c = rep["classes"]["0"]
    assert (c["tp"], c["fp"], c["fn"]) == (26, 3, 1)
    assert c["precision"] == pytest.approx(0.897, abs=1e-3)
    assert c["recall"] == pytest.approx(0.963, abs=1e-3)
    assert (tmp_path / "pr_curve.csv").exists()


def test_eval_identity_and_empty(tmp_path):
    truth = DATA / "eval_truths.txt"
    assert main(["eval", str(truth), str(truth), "--out", str(tmp_path / "i")]) == 0
    rep = json.loads((tmp_path / "i" / "eval_report.json").read_text())
    assert rep["map"] == 1.0 and rep["classes"]["0"]["f1"] == 1.0
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["eval", str(empty), str(truth), "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "eval_report.json").read_text())["map"] == 0.0


def test_eval_missing_file_exits_2(tmp_path):
    assert main(["eval", str(tmp_path / "nope"), str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


def test_jobs_do_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--out", str(a), "--jobs", "1"]) == 0
    assert main(["simulate", "--out", str(b), "--jobs", "3"]) == 0
    for f in sorted((a / "rasters").iterdir()):
        assert f.read_bytes() == (b / "rasters" / f.name).read_bytes()
