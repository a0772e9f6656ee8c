"""``faultxai`` command line: simulate/ingest -> train -> attribute -> analyze -> report.

Every stage reads its inputs from and writes its outputs to a fixed
subdirectory of ``--out``::

    dataset/        manifest.json + runs/*.csv          (simulate, ingest)
    model/          model.fxm, metrics.json             (train)
    attributions/   <fault>/<method>/*.csv, index.json  (attribute)
    analysis/       summary.json, scores/<fault>.csv    (analyze)
    report/         heatmap.svg, tables/, plots/        (report)

Each stage directory gets an ``artifacts.json`` with sha256 hashes; ``repro``
additionally writes a top-level ``manifest.json`` covering all stages.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import attribution as attr
from . import experiment as ex
from . import report as rp
from ._io import ARTIFACTS, atomic_write, dump_json, hash_tree, write_manifest
from .config import CsvSource, ExperimentConfig, load_config, stage_seed
from .errors import AttributionError, ConfigError, FaultXAIError, MissingArtifactError
from .procsim import SIM_SCENARIOS, default_process_spec, generate_dataset, ingest_tep_files, load_dataset, save_dataset
from .seqmodel import SequenceModel

log = logging.getLogger("faultxai")

LOG_ENV = "FAULTXAI_LOG_LEVEL"
MODEL_FILE = "model.fxm"


# -- helpers -----------------------------------------------------------------


def _fresh_stage_dir(out: Path, name: str) -> Path:
    """Empty ``out/name`` for a stage, refusing to clear anything the pipeline did not write."""
    d = out / name
    if d.exists():
        if not (d / ARTIFACTS).is_file() and any(d.iterdir()):
            raise FaultXAIError(f"{d} exists and was not written by faultxai; refusing to overwrite")
        shutil.rmtree(d)
    d.mkdir(parents=True)
    return d


def _read_json(path: Path, producer: str):
    if not path.is_file():
        raise MissingArtifactError(path, producer)
    return json.loads(path.read_text())


def _dataset_producer(cfg: ExperimentConfig) -> str:
    return "simulate" if cfg.dataset.source == "simulator" else "ingest"


def _load_model(out: Path) -> SequenceModel:
    path = out / "model" / MODEL_FILE
    if not path.is_file():
        raise MissingArtifactError(path, "train")
    return SequenceModel.load(path.read_bytes())


# -- stages ------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    d = cfg.dataset
    if d.source != "simulator":
        raise ConfigError("dataset.source is 'csv'; use `faultxai ingest`")
    spec = default_process_spec(d.duration)
    scenarios = [SIM_SCENARIOS[s] for s in d.scenarios]
    ds = generate_dataset(spec, scenarios, d.runs_per_scenario, d.window_len, d.stride,
                          seed=stage_seed(cfg.seed, "simulate"), normal_runs=d.normal_runs)
    target = _fresh_stage_dir(out, "dataset")
    save_dataset(ds, target)
    write_manifest(target)
    log.info("simulated %d runs, %d windows", len(ds.runs), len(ds.y))
    return target


def cmd_ingest(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    d = cfg.dataset
    if not d.csv:
        raise ConfigError("no CSV sources: set dataset.csv in the config or pass --csv")
    sources = [(cfg.resolve(s.path), s.label, s.onset) for s in d.csv]
    ds = ingest_tep_files(sources, d.schema).windowed(d.window_len, d.stride)
    target = _fresh_stage_dir(out, "dataset")
    save_dataset(ds, target)
    write_manifest(target)
    return target


def cmd_train(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    ds = load_dataset(out / "dataset", producer=_dataset_producer(cfg))
    m = cfg.model
    model, metrics = ex.fit_model(ds, cfg.dataset.window_len, cfg.dataset.stride, cfg.dataset.holdout_fraction,
                                  stage_seed(cfg.seed, "train"), m.hidden_size, m.learning_rate, m.epochs,
                                  m.batch_size, m.weight_decay)
    target = _fresh_stage_dir(out, "model")
    atomic_write(target / MODEL_FILE, model.save())
    atomic_write(target / "metrics.json", dump_json(metrics))
    write_manifest(target)
    log.info("trained: train acc %.3f, holdout acc %s", metrics["train_accuracy"], metrics["holdout_accuracy"])
    return target


def cmd_attribute(cfg: ExperimentConfig, out, methods=None) -> Path:
    out = Path(out)
    model = _load_model(out)
    ds = load_dataset(out / "dataset", producer=_dataset_producer(cfg))
    metrics = _read_json(out / "model" / "metrics.json", "train")
    methods = list(methods or cfg.attribution.methods)
    a = cfg.attribution
    run_ids = metrics["holdout_runs"] or list(range(len(ds.runs)))
    per_fault = ex.post_onset_windows(model, [ds.runs[i] for i in run_ids], ds.class_labels, cfg.dataset.stride,
                                      cfg.analysis.horizon, run_ids, a.windows_per_fault)
    if not per_fault:
        raise AttributionError("no post-onset windows inside the analysis horizon to attribute")
    if a.baseline == "normal_mean":
        baseline = ex.normal_baseline(model, [ds.runs[i] for i in metrics["train_runs"]], ds.class_labels,
                                      cfg.dataset.stride)
    else:
        baseline = attr.Baseline(np.zeros((model.window_len, model.num_features)), "zeros")

    root = stage_seed(cfg.seed, "attribute")
    target = _fresh_stage_dir(out, "attributions")
    index = []
    for fault in sorted(per_fault, key=ds.class_labels.index):
        for n, fw in enumerate(per_fault[fault]):
            maps = ex.attribute_window(model, fw, baseline, methods, a.ig_steps, a.num_permutations,
                                       ex.window_seed(root, fw.target, n))
            for amap in maps:
                amap.fault_class = fault
                rel = f"{fault}/{amap.method}/run{fw.run:03d}_t{fw.start:04d}.csv"
                atomic_write(target / rel, attr.attribution_to_csv(amap))
                index.append({"file": rel, "fault": fault, "method": amap.method, "family": amap.method_family,
                              "run": fw.run, "start": fw.start, "offset": fw.offset})
    atomic_write(target / "index.json", dump_json({"window_len": model.window_len, "baseline": baseline.provenance,
                                                  "maps": index}))
    write_manifest(target)
    return target


def cmd_analyze(cfg: ExperimentConfig, out, k: int | None = None) -> Path:
    out = Path(out)
    k = cfg.analysis.k if k is None else k
    idx = _read_json(out / "attributions" / "index.json", "attribute")
    ds = load_dataset(out / "dataset", producer=_dataset_producer(cfg))
    smap = an.load_subsystem_map(cfg.subsystem_map_source())
    names = list(ds.schema)
    maps: dict[str, list] = {}
    runs_by_fault: dict[str, list[int]] = {}
    for e in idx["maps"]:
        maps.setdefault(e["fault"], []).append(attr.attribution_from_csv((out / "attributions" / e["file"]).read_text()))
        runs = runs_by_fault.setdefault(e["fault"], [])
        if e["run"] not in runs:
            runs.append(e["run"])

    summary = {"features": names, "k": k, "horizon": cfg.analysis.horizon, "faults": {}}
    target = _fresh_stage_dir(out, "analysis")
    for fault in sorted(maps, key=ds.class_labels.index):
        entry = ex.summarize_fault(maps[fault], names, fault, cfg.analysis.horizon, idx["window_len"], k, smap)
        entry["runs"] = runs_by_fault[fault]
        run = ds.runs[runs_by_fault[fault][0]]
        dev = an.deviation_from_normal(run.data, ex.reference_trace(ds, run), run.onset_index,
                                       cfg.analysis.horizon, normal_std=ds.std)
        entry["deviation_from_normal"] = dev.tolist()
        summary["faults"][fault] = entry
        ms = entry["methods"]
        if "IG" in ms and "SHAP" in ms:
            rp.emit_score_table(names, ms["IG"]["normalized"], ms["SHAP"]["normalized"],
                                target / "scores" / f"{fault}.csv", k, cfg.report.decimals)
    atomic_write(target / "summary.json", dump_json(summary))
    write_manifest(target)
    return target


def cmd_report(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    summary = _read_json(out / "analysis" / "summary.json", "analyze")
    ds = load_dataset(out / "dataset", producer=_dataset_producer(cfg))
    names = summary["features"]
    faults = list(summary["faults"])
    families = sorted({fam for f in faults for fam in summary["faults"][f]["methods"]})
    scores = {}
    for fam in families:
        scores[fam] = np.array([summary["faults"][f]["methods"].get(fam, {}).get("normalized", [0.0] * len(names))
                                for f in faults])
    bundle = rp.ReportBundle(faults, names, scores)
    target = _fresh_stage_dir(out, "report")
    rp.emit_heatmap(bundle, target / "heatmap.svg", cfg.report.threshold)
    k = summary["k"]
    for fi, fault in enumerate(faults):
        if set(families) >= {"IG", "SHAP"}:
            ig, shap = scores["IG"][fi], scores["SHAP"][fi]
            rp.emit_score_table(names, ig, shap, target / "tables" / f"{fault}.csv", k, cfg.report.decimals)
            atomic_write(target / "tables" / f"{fault}.txt",
                         an.format_score_table(names, ig, shap, cfg.report.decimals) + "\n")
        channels = []
        for fam in families:
            for c in summary["faults"][fault]["methods"][fam]["top_k"]:
                if c not in channels:
                    channels.append(c)
        channels = channels[: max(cfg.report.plot_channels, 0)]
        run = summary["faults"][fault]["runs"][0]
        rp.emit_variable_plots(ds, run, channels, target / "plots" / fault)
    write_manifest(target)
    return target


def summary_rows(out) -> list[dict]:
    out = Path(out)
    summary = _read_json(out / "analysis" / "summary.json", "analyze")
    metrics = _read_json(out / "model" / "metrics.json", "train")
    rows = []
    for fault, e in summary["faults"].items():
        ms = e["methods"]
        acc = (metrics.get("per_class_accuracy") or {}).get(fault)
        hits = [ms[f]["localization"]["hit"] for f in ms if ms[f]["localization"] is not None]
        rows.append({
            "fault": fault,
            "accuracy": acc,
            "ig_top": ms.get("IG", {}).get("top_k"),
            "shap_top": ms.get("SHAP", {}).get("top_k"),
            "overlap": e.get("agreement", {}).get("top_k_overlap"),
            "localization_hit": all(hits) if hits else None,
        })
    return rows


def format_summary(rows, holdout_accuracy=None) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.3f}"
        if isinstance(v, list):
            return ",".join(v)
        return str(v)

    cols = ["fault", "accuracy", "ig_top", "shap_top", "overlap", "localization_hit"]
    table = [cols] + [[fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    if holdout_accuracy is not None:
        lines.append(f"holdout accuracy (all classes): {holdout_accuracy:.3f}")
    return "\n".join(lines)


def cmd_repro(cfg: ExperimentConfig, out, methods=None, k=None) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (cmd_simulate if cfg.dataset.source == "simulator" else cmd_ingest)(cfg, out)
    cmd_train(cfg, out)
    cmd_attribute(cfg, out, methods)
    cmd_analyze(cfg, out, k)
    cmd_report(cfg, out)
    atomic_write(out / "config.json", dump_json(cfg.to_dict()))
    files = {}
    for stage in ("dataset", "model", "attributions", "analysis", "report"):
        for rel, digest in hash_tree(out / stage, exclude=()).items():
            files[f"{stage}/{rel}"] = digest
    files["config.json"] = hash_tree(out, exclude=())["config.json"]
    atomic_write(out / "manifest.json", dump_json({"files": files}))
    return out / "manifest.json"


# -- entry point ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faultxai", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON); defaults to the built-in settings")
        sp.add_argument("--out", default="faultxai-out", help="artifact root directory (default: %(default)s)")
        sp.add_argument("--seed", type=int, help="root seed, overrides the config")
        return sp

    common(sub.add_parser("simulate", help="simulate the built-in process into a dataset"))
    ing = common(sub.add_parser("ingest", help="load TEP CSV exports into a dataset"))
    ing.add_argument("--csv", action="append", default=[], metavar="PATH", help="CSV file (repeatable)")
    ing.add_argument("--label", help="fault label for the --csv files (default: from label column or normal)")
    ing.add_argument("--onset", type=int, help="fault onset row for the --csv files")
    ing.add_argument("--schema", type=int, choices=(52, 53), help="column schema")
    common(sub.add_parser("train", help="train the LSTM classifier"))
    att = common(sub.add_parser("attribute", help="attribute post-fault windows"))
    att.add_argument("--methods", help="comma-separated subset of ig,shap")
    ana = common(sub.add_parser("analyze", help="aggregate, normalize, compare and localize"))
    ana.add_argument("--k", type=int, help="top-k size")
    common(sub.add_parser("report", help="write heatmap, tables and plots"))
    rep = common(sub.add_parser("repro", help="run the full chain and print a summary"))
    rep.add_argument("--methods", help="comma-separated subset of ig,shap")
    rep.add_argument("--k", type=int, help="top-k size")
    return p


def _configure(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "methods", None):
        cfg.attribution.methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "k", None) is not None:
        cfg.analysis.k = args.k
    if args.command == "ingest":
        if args.csv:
            cfg.dataset.csv = [CsvSource(str(Path(c).resolve()), args.label, args.onset) for c in args.csv]
            cfg.dataset.source = "csv"
        if args.schema:
            cfg.dataset.schema = args.schema
    return cfg.validate()


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = _configure(args)
        out = Path(args.out)
        cmd = args.command
        if cmd == "simulate":
            print(cmd_simulate(cfg, out))
        elif cmd == "ingest":
            print(cmd_ingest(cfg, out))
        elif cmd == "train":
            target = cmd_train(cfg, out)
            acc = json.loads((target / "metrics.json").read_text())["holdout_accuracy"]
            print(f"{target} holdout_accuracy={acc if acc is None else format(acc, '.4f')}")
        elif cmd == "attribute":
            print(cmd_attribute(cfg, out))
        elif cmd == "analyze":
            print(cmd_analyze(cfg, out))
        elif cmd == "report":
            print(cmd_report(cfg, out))
        elif cmd == "repro":
            manifest = cmd_repro(cfg, out)
            metrics = json.loads((out / "model" / "metrics.json").read_text())
            print(format_summary(summary_rows(out), metrics["holdout_accuracy"]))
            print(f"manifest: {manifest}")
    except Exception as exc:  # reported as one JSON line; traceback only at DEBUG
        log.debug("command failed", exc_info=True)
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if isinstance(exc, MissingArtifactError):
            err["missing"] = str(exc.path)
            err["run_first"] = exc.command
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
