"""In-memory pipeline steps shared by the CLI and the experiment scripts.

No file I/O here; :mod:`faultxai.cli` persists what these functions return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import analysis as an
from . import attribution as attr
from .procsim import NORMAL, Dataset, Run, extract_windows, standardization_stats
from .seqmodel import ModelConfig, SequenceModel, train


def split_runs(ds: Dataset, holdout_fraction: float) -> tuple[list[int], list[int]]:
    """Per label, hold out the last ``ceil(fraction * n)`` runs (none when a label has one run)."""
    train_idx, test_idx = [], []
    for label in ds.class_labels:
        idx = [i for i, r in enumerate(ds.runs) if r.label == label]
        n_test = math.ceil(holdout_fraction * len(idx)) if len(idx) > 1 else 0
        n_test = min(n_test, len(idx) - 1)
        train_idx += idx[: len(idx) - n_test]
        test_idx += idx[len(idx) - n_test:]
    return sorted(train_idx), sorted(test_idx)


def evaluate(model: SequenceModel, runs: Sequence[Run], class_labels, stride: int) -> dict:
    """Window-level accuracy, per-class recall and confusion matrix (rows: true class)."""
    K = len(class_labels)
    X, y, _ = extract_windows(runs, class_labels, model.window_len, stride, model.feature_mean, model.feature_std)
    pred = model.classify(X)
    conf = np.zeros((K, K), dtype=int)
    np.add.at(conf, (y, pred), 1)
    per_class = {class_labels[k]: (float(conf[k, k] / conf[k].sum()) if conf[k].sum() else None) for k in range(K)}
    return {"accuracy": float(np.mean(pred == y)), "per_class_accuracy": per_class,
            "confusion": conf.tolist(), "windows_per_class": conf.sum(axis=1).tolist()}


def fit_model(ds: Dataset, window_len: int, stride: int, holdout_fraction: float, seed: int,
              hidden_size=32, learning_rate=5e-3, epochs=20, batch_size=32,
              weight_decay=1.0) -> tuple[SequenceModel, dict]:
    """Train on a run-level split of ``ds``; standardization comes from the training runs only."""
    train_idx, test_idx = split_runs(ds, holdout_fraction)
    train_runs = [ds.runs[i] for i in train_idx]
    mean, std = standardization_stats(train_runs)
    X, y, _ = extract_windows(train_runs, ds.class_labels, window_len, stride, mean, std)
    mc = ModelConfig(ds.num_features, window_len, ds.num_classes, hidden_size=hidden_size,
                     learning_rate=learning_rate, epochs=epochs, batch_size=batch_size, rng_seed=seed,
                     weight_decay=weight_decay)
    model, history = train(X, y, mc, ds.class_labels, list(ds.schema), mean, std)
    metrics = {
        "class_labels": list(ds.class_labels),
        "train_runs": train_idx,
        "holdout_runs": test_idx,
        "train_windows_per_class": np.bincount(y, minlength=ds.num_classes).tolist(),
        "initial_loss": history.initial_loss,
        "final_loss": history.final_loss,
        "train_accuracy": history.train_accuracy,
        "holdout_accuracy": None,
        "per_class_accuracy": None,
        "confusion": None,
    }
    if test_idx:
        ev = evaluate(model, [ds.runs[i] for i in test_idx], ds.class_labels, stride)
        metrics.update(holdout_accuracy=ev["accuracy"], per_class_accuracy=ev["per_class_accuracy"],
                       confusion=ev["confusion"], holdout_windows_per_class=ev["windows_per_class"])
    return model, metrics


def normal_baseline(model: SequenceModel, runs: Sequence[Run], class_labels, stride: int) -> attr.Baseline:
    """Mean standardized normal-class window, constant over time."""
    X, y, _ = extract_windows(runs, class_labels, model.window_len, stride, model.feature_mean, model.feature_std)
    holder = Dataset(tuple(model.feature_names), [], list(class_labels), model.feature_mean, model.feature_std,
                     model.window_len, stride, X, y)
    return attr.make_baseline(holder, "normal_mean")


@dataclass
class FaultWindow:
    run: int        # index into the run list it was cut from
    start: int
    offset: int     # start - onset
    target: int     # class index of the fault
    values: np.ndarray


def post_onset_windows(model: SequenceModel, runs: Sequence[Run], class_labels, stride: int, horizon: int,
                       run_ids: Sequence[int] | None = None, limit: int | None = None) -> dict[str, list[FaultWindow]]:
    """Fault windows lying entirely within ``horizon`` samples after onset, grouped by fault label."""
    run_ids = list(range(len(runs))) if run_ids is None else list(run_ids)
    W = model.window_len
    X, y, index = extract_windows(runs, class_labels, W, stride, model.feature_mean, model.feature_std)
    out: dict[str, list[FaultWindow]] = {}
    for x, k, wi in zip(X, y, index):
        if k == 0 or wi.offset is None or wi.offset + W > horizon:
            continue
        out.setdefault(class_labels[k], []).append(FaultWindow(run_ids[wi.run], wi.start, wi.offset, int(k), x))
    if limit is not None:
        out = {f: w[:limit] for f, w in out.items()}
    return out


def attribute_window(model, fw: FaultWindow, baseline, methods=("ig", "shap"), ig_steps=64,
                     num_permutations=200, rng_seed=0) -> list[attr.AttributionMap]:
    """IG and/or Shapley maps for one window, explaining the window's true fault class."""
    maps = []
    if "ig" in methods:
        maps.append(attr.integrated_gradients(model, fw.values, baseline, fw.target, steps=ig_steps))
    if "shap" in methods:
        maps.append(attr.shapley(model, fw.values, baseline, fw.target, num_permutations, rng_seed))
    for m in maps:
        m.window_offset = fw.offset
    return maps


def window_seed(root: int, target: int, n: int) -> int:
    return int(np.random.SeedSequence([root, target, n]).generate_state(1)[0])


def summarize_fault(maps: Sequence[attr.AttributionMap], names: Sequence[str], fault: str, horizon: int,
                    window_len: int, k: int = an.DEFAULT_K, smap: an.SubsystemMap | None = None) -> dict:
    """Aggregate per method family, normalize, rank, localize and compare IG with SHAP."""
    families: dict[str, list] = {}
    for m in maps:
        families.setdefault(m.method_family, []).append(m)
    entry: dict = {"methods": {}}
    normalized = {}
    for family in ("IG", "SHAP"):
        if family not in families:
            continue
        agg = an.aggregate(families[family], horizon, window_len)
        z = an.normalize(agg)
        normalized[family] = z
        m = {"method": agg.method, "num_windows": agg.num_windows, "mean_scores": agg.mean_scores.tolist(),
             "normalized": z.tolist(), "top_k": an.top_k(z, k, names), "localization": None}
        if smap is not None and fault in smap.faults:
            loc = an.localization_score(z, smap, fault, k, names)
            m["localization"] = {"hit": loc.hit, "matched": loc.matched, "fraction": loc.fraction,
                                 "expected": loc.expected}
        entry["methods"][family] = m
    if len(normalized) == 2:
        ag = an.agreement(normalized["IG"], normalized["SHAP"], k, names)
        entry["agreement"] = {"top_k_overlap": ag.top_k_overlap, "rank_correlation": ag.rank_correlation}
    return entry


def reference_trace(ds: Dataset, run: Run) -> np.ndarray:
    """A normal run to compare ``run`` against, else ``run``'s own pre-onset mean held constant."""
    normal = [r for r in ds.runs if r.label == NORMAL]
    if normal and len(normal[0].data) >= len(run.data):
        return normal[0].data[: len(run.data)]
    pre = run.data[: run.onset_index] if run.onset_index else run.data
    return np.repeat(pre.mean(axis=0, keepdims=True), len(run.data), axis=0)
