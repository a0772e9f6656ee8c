from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from faultxai import experiment as ex
from faultxai.procsim import SIM_SCENARIOS, STEP_SCENARIOS, default_process_spec, generate_dataset

DATA = Path(__file__).parent / "data"


def load_idv11_scores():
    """Normalized Fault 11 scores transcribed from the source publication (53 channels)."""
    with open(DATA / "idv11_published.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = [r["feature"] for r in rows]
    return names, np.array([float(r["IG"]) for r in rows]), np.array([float(r["SHAP"]) for r in rows])


@pytest.fixture(scope="session")
def idv11_scores():
    return load_idv11_scores()


@pytest.fixture(scope="session")
def sim_dataset():
    """Four step faults, 10 runs each; windows of 20 samples, stride 10."""
    scenarios = [SIM_SCENARIOS[s] for s in STEP_SCENARIOS]
    return generate_dataset(default_process_spec(), scenarios, 10, 20, 10, seed=0)


@dataclass
class Trained:
    model: object
    metrics: dict
    baseline: object
    seconds: float


@pytest.fixture(scope="session")
def trained(sim_dataset):
    """Model trained once per session on ``sim_dataset`` with the pipeline defaults."""
    t0 = time.perf_counter()
    model, metrics = ex.fit_model(sim_dataset, 20, 10, 0.3, seed=0)
    seconds = time.perf_counter() - t0
    train_runs = [sim_dataset.runs[i] for i in metrics["train_runs"]]
    baseline = ex.normal_baseline(model, train_runs, sim_dataset.class_labels, 10)
    return Trained(model, metrics, baseline, seconds)


@pytest.fixture(scope="session")
def holdout_windows(sim_dataset, trained):
    ids = trained.metrics["holdout_runs"]
    runs = [sim_dataset.runs[i] for i in ids]
    return ex.post_onset_windows(trained.model, runs, sim_dataset.class_labels, 10, 100, ids)
