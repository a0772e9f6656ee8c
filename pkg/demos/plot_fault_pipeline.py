"""
From simulated runs to a fault heatmap
======================================

The same chain ``faultxai repro`` runs, written out step by step: simulate,
train the LSTM, explain post-onset windows, aggregate and localize.
"""

# %%
import sys
import time
from pathlib import Path

import numpy as np

from faultxai import analysis as an
from faultxai import experiment as ex
from faultxai.procsim import SIM_SCENARIOS, STEP_SCENARIOS, default_process_spec, generate_dataset
from faultxai.report import ReportBundle, emit_heatmap

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out") / "pipeline"

# %%
# Ten runs of each step fault; 20-sample windows every 10 samples.
ds = generate_dataset(default_process_spec(), [SIM_SCENARIOS[s] for s in STEP_SCENARIOS], 10, 20, 10, seed=0)
print(ds.class_labels, np.bincount(ds.y))

# %%
# Hold out the last three runs of every class, train on the rest.
t0 = time.perf_counter()
model, metrics = ex.fit_model(ds, 20, 10, 0.3, seed=0)
print(f"holdout accuracy {metrics['holdout_accuracy']:.3f} after {time.perf_counter() - t0:.1f} s")

# %%
# Baseline: the mean normal window.  Explain the true fault class for every
# holdout window that starts within 100 samples of onset.
base = ex.normal_baseline(model, [ds.runs[i] for i in metrics["train_runs"]], ds.class_labels, 10)
hold = metrics["holdout_runs"]
windows = ex.post_onset_windows(model, [ds.runs[i] for i in hold], ds.class_labels, 10, 100, hold, limit=6)
smap = an.load_subsystem_map("simulator")
names = list(ds.schema)
summary = {}
for fault, ws in sorted(windows.items()):
    maps = [m for fw in ws for m in ex.attribute_window(model, fw, base)]
    summary[fault] = ex.summarize_fault(maps, names, fault, 100, 20, 3, smap)

# %%
for fault, entry in summary.items():
    ig, shap = entry["methods"]["IG"], entry["methods"]["SHAP"]
    print(f"{fault:22s} IG {ig['top_k']}  SHAP {shap['top_k']}  "
          f"overlap {entry['agreement']['top_k_overlap']:.2f}  expected {ig['localization']['expected']}")

# %%
# Heatmap of the normalized scores: an IG (A) and SHAP (B) column per fault.
faults = list(summary)
bundle = ReportBundle(faults, names, {
    fam: np.array([summary[f]["methods"][fam]["normalized"] for f in faults]) for fam in ("IG", "SHAP")
})
print("wrote", emit_heatmap(bundle, out / "heatmap.svg"))
