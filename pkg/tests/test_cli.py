"""Config loading, CLI stages, artifact layout and byte-level reproducibility."""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from faultxai import cli
from faultxai._io import hash_tree
from faultxai.config import ExperimentConfig, config_from_dict, load_config, stage_seed, STAGES
from faultxai.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
QUICK = CONFIGS / "quick.json"


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- config -----------------------------------------------------------------------------------


def test_shipped_default_matches_builtin():
    assert json.loads((CONFIGS / "default.json").read_text()) == ExperimentConfig().to_dict()
    assert load_config(CONFIGS / "default.json").to_dict() == load_config(None).to_dict()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict({"colour": 1})
    with pytest.raises(ConfigError, match="hiden_size"):
        config_from_dict({"model": {"hiden_size": 4}})
    with pytest.raises(ConfigError):
        config_from_dict({"dataset": {"csv": [{"path": "x", "sep": ";"}]}})


@pytest.mark.parametrize("section,values", [
    ("dataset", {"source": "excel"}),
    ("dataset", {"scenarios": ["meteor_strike"]}),
    ("dataset", {"holdout_fraction": 1.0}),
    ("dataset", {"schema": 50}),
    ("attribution", {"methods": ["lime"]}),
    ("attribution", {"baseline": "median"}),
    ("analysis", {"k": 0}),
    ("analysis", {"normalization": "minmax"}),
    ("analysis", {"horizon": 10}),
])
def test_invalid_values_rejected(section, values):
    with pytest.raises(ConfigError):
        config_from_dict({section: values})


def test_missing_csv_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found|missing|exist"):
        config_from_dict({"dataset": {"source": "csv", "csv": [{"path": "nope.csv"}]}}, base_dir=tmp_path)


def test_tep_example_config_resolves_relative_paths(tmp_path):
    shutil.copy(CONFIGS / "tep_idv11.json", tmp_path / "c.json")
    (tmp_path / "tep").mkdir()
    for name in ("d00.csv", "d11_te.csv"):
        (tmp_path / "tep" / name).write_text("0\n")
    cfg = load_config(tmp_path / "c.json")
    assert cfg.resolve(cfg.dataset.csv[1].path) == tmp_path / "tep" / "d11_te.csv"
    assert cfg.dataset.csv[1].label == "IDV11"


def test_stage_seeds_are_distinct_and_stable():
    seeds = [stage_seed(0, s) for s in STAGES]
    assert len(set(seeds)) == len(STAGES)
    assert seeds == [stage_seed(0, s) for s in STAGES]
    assert stage_seed(1, "train") != stage_seed(0, "train")


# -- CLI --------------------------------------------------------------------------------------


def test_missing_artifact_names_producer(tmp_path, capsys):
    code, _, err = run_cli(capsys, "train", "--out", tmp_path / "empty")
    assert code != 0
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["run_first"] == "simulate" and msg["command"] == "train"
    assert "dataset" in msg["missing"]
    code, _, err = run_cli(capsys, "analyze", "--out", tmp_path / "empty")
    assert code != 0 and json.loads(err)["run_first"] == "attribute"


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"layers": 3}}))
    code, _, err = run_cli(capsys, "simulate", "--config", bad, "--out", tmp_path / "o")
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_refuses_to_clear_foreign_directory(tmp_path, capsys):
    (tmp_path / "o" / "dataset").mkdir(parents=True)
    (tmp_path / "o" / "dataset" / "precious.txt").write_text("keep me")
    code, _, err = run_cli(capsys, "simulate", "--config", QUICK, "--out", tmp_path / "o")
    assert code != 0 and "refusing" in err
    assert (tmp_path / "o" / "dataset" / "precious.txt").read_text() == "keep me"


@pytest.fixture(scope="module")
def quick_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    assert cli.main(["repro", "--config", str(QUICK), "--out", str(out)]) == 0
    return out


def test_repro_layout(quick_run):
    out = quick_run
    for rel in ("dataset/manifest.json", "model/model.fxm", "model/metrics.json", "attributions/index.json",
                "analysis/summary.json", "report/heatmap.svg", "config.json", "manifest.json"):
        assert (out / rel).is_file(), rel
    for stage in ("dataset", "model", "attributions", "analysis", "report"):
        assert (out / stage / "artifacts.json").is_file()
    summary = json.loads((out / "analysis" / "summary.json").read_text())
    faults = json.loads(QUICK.read_text())["dataset"]["scenarios"]
    assert sorted(summary["faults"]) == sorted(faults) and summary["k"] == 3
    for f in faults:
        assert (out / "report" / "tables" / f"{f}.csv").is_file()
        assert list((out / "attributions" / f / "IG").glob("run*_t*.csv"))
        assert list((out / "report" / "plots" / f).glob("*.svg"))
    manifest = json.loads((out / "manifest.json").read_text())["files"]
    assert manifest["config.json"] == hash_tree(out, exclude=())["config.json"]
    assert manifest["model/model.fxm"] == hash_tree(out / "model", exclude=())["model.fxm"]
    for f in faults:
        entry = summary["faults"][f]
        assert set(entry["methods"]) == {"IG", "SHAP"}
        assert 0 <= entry["agreement"]["top_k_overlap"] <= 1
        assert len(entry["methods"]["IG"]["top_k"]) == 3


def test_stage_artifact_hashes_match(quick_run):
    for stage in ("dataset", "model", "attributions", "analysis", "report"):
        recorded = json.loads((quick_run / stage / "artifacts.json").read_text())
        actual = hash_tree(quick_run / stage, exclude=("artifacts.json",))
        assert recorded["files"] == actual, stage


def test_attribute_rerun_is_byte_identical(quick_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(quick_run, out)
    before = hash_tree(out / "attributions", exclude=())
    cfg = load_config(QUICK)
    cli.cmd_attribute(cfg, out)
    assert hash_tree(out / "attributions", exclude=()) == before


def test_repro_twice_same_manifest(quick_run, tmp_path, capsys):
    code, stdout, _ = run_cli(capsys, "repro", "--config", QUICK, "--out", tmp_path / "again")
    assert code == 0 and "manifest:" in stdout and "holdout accuracy" in stdout
    assert (tmp_path / "again" / "manifest.json").read_bytes() == (quick_run / "manifest.json").read_bytes()


def test_seed_override_changes_data(quick_run, tmp_path, capsys):
    code, _, _ = run_cli(capsys, "simulate", "--config", QUICK, "--out", tmp_path / "s", "--seed", 7)
    assert code == 0
    a = (tmp_path / "s" / "dataset" / "runs" / "run_000.csv").read_bytes()
    assert a != (quick_run / "dataset" / "runs" / "run_000.csv").read_bytes()


def test_methods_and_k_flags(quick_run, tmp_path, capsys):
    out = tmp_path / "m"
    shutil.copytree(quick_run, out)
    code, _, _ = run_cli(capsys, "attribute", "--config", QUICK, "--out", out, "--methods", "ig")
    assert code == 0
    assert list((out / "attributions").glob("*/IG"))
    assert not list((out / "attributions").glob("*/SHAP*"))
    code, _, _ = run_cli(capsys, "analyze", "--config", QUICK, "--out", out, "--k", "2")
    assert code == 0
    summary = json.loads((out / "analysis" / "summary.json").read_text())
    for entry in summary["faults"].values():
        assert len(entry["methods"]["IG"]["top_k"]) == 2 and "SHAP" not in entry["methods"]


def _write_tep(path, data, labels=None):
    rows = data.tolist() if labels is None else [list(r) + [int(l)] for r, l in zip(data.tolist(), labels)]
    path.write_text("\n".join(",".join(format(v, ".6f") if isinstance(v, float) else str(v) for v in r)
                              for r in rows) + "\n")


def test_ingest_csv_pipeline(tmp_path, capsys):
    rng = np.random.default_rng(0)
    normal = rng.normal(size=(200, 52))
    faulty = rng.normal(size=(200, 52))
    faulty[100:, 8] += 3.0
    _write_tep(tmp_path / "d00.csv", normal)
    _write_tep(tmp_path / "d04.csv", faulty, [0] * 100 + [4] * 100)
    cfg = json.loads(QUICK.read_text())
    cfg["analysis"].update(subsystem_map="tep")
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    out = tmp_path / "o"
    code, stdout, err = run_cli(capsys, "ingest", "--config", tmp_path / "c.json", "--out", out,
                                "--csv", tmp_path / "d00.csv", "--csv", tmp_path / "d04.csv")
    assert code == 0, err
    manifest = json.loads((out / "dataset" / "manifest.json").read_text())
    assert manifest["class_labels"] == ["normal", "IDV4"]
    assert manifest["schema"][0] == "xmeas_1" and len(manifest["schema"]) == 52
    assert manifest["runs"][1]["onset_index"] == 100
    # the remaining stages read the CSV-backed dataset
    for stage in ("train", "attribute", "analyze", "report"):
        code, _, err = run_cli(capsys, stage, "--config", tmp_path / "c.json", "--out", out)
        assert code == 0, (stage, err)
    assert (out / "report" / "tables" / "IDV4.csv").is_file()


def test_ingest_rejects_wrong_width(tmp_path, capsys):
    _write_tep(tmp_path / "bad.csv", np.zeros((30, 10)))
    code, _, err = run_cli(capsys, "ingest", "--out", tmp_path / "o", "--csv", tmp_path / "bad.csv")
    assert code != 0
    msg = json.loads(err)
    assert msg["error"] == "SchemaError" and "52" in msg["message"] and "53" in msg["message"]
