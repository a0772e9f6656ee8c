"""Labeled runs, window extraction, and the on-disk dataset layout.

Dataset directory layout::

    manifest.json          schema, class labels, standardization stats,
                           window settings, one entry per run
    runs/run_000.csv       one row per sample, one column per channel,
    runs/run_001.csv       values written with 17 significant digits
    ...

Windows are never stored; they are re-extracted from the runs on load, so a
dataset round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .._io import atomic_write
from ..errors import DatasetError, MissingArtifactError
from .process import CHANNELS, FaultScenario, ProcessSpec, simulate

NORMAL = "normal"
MANIFEST = "manifest.json"
LAYOUT_VERSION = 1


@dataclass
class Run:
    data: np.ndarray              # [T, M] raw channel values
    label: str                    # NORMAL or a fault id
    onset_index: int | None = None
    seed: int | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DatasetError(f"run data must be 2-D, got shape {self.data.shape}")
        if self.onset_index is not None and not 0 <= self.onset_index < len(self.data):
            raise DatasetError(f"onset_index {self.onset_index} outside run of {len(self.data)} samples")

    @property
    def is_faulty(self) -> bool:
        return self.label != NORMAL and self.onset_index is not None

    def normal_rows(self) -> np.ndarray:
        if self.label == NORMAL:
            return self.data
        if self.onset_index is None:
            return self.data[:0]
        return self.data[: self.onset_index]


@dataclass
class WindowIndex:
    run: int
    start: int
    offset: int | None  # start - onset for fault windows, None otherwise


@dataclass
class Dataset:
    schema: tuple[str, ...]
    runs: list[Run]
    class_labels: list[str]
    mean: np.ndarray
    std: np.ndarray
    window_len: int | None = None
    stride: int | None = None
    X: np.ndarray | None = None          # [N, window_len, M], standardized
    y: np.ndarray | None = None          # [N] class indices
    index: list[WindowIndex] = field(default_factory=list)

    def __post_init__(self):
        self.schema = tuple(self.schema)
        for r in self.runs:
            if r.data.shape[1] != len(self.schema):
                raise DatasetError(f"run has {r.data.shape[1]} channels, schema has {len(self.schema)}")
            if r.label not in self.class_labels:
                raise DatasetError(f"run label {r.label!r} not among declared classes {self.class_labels}")
        if not self.class_labels or self.class_labels[0] != NORMAL:
            raise DatasetError(f"class 0 must be {NORMAL!r}")

    @property
    def num_features(self) -> int:
        return len(self.schema)

    @property
    def num_classes(self) -> int:
        return len(self.class_labels)

    def standardize(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std

    def windowed(self, window_len: int, stride: int) -> "Dataset":
        """Copy of this dataset with windows extracted at the given length and stride."""
        X, y, index = extract_windows(self.runs, self.class_labels, window_len, stride, self.mean, self.std)
        return Dataset(self.schema, self.runs, self.class_labels, self.mean, self.std,
                       window_len, stride, X, y, index)

    def class_windows(self, label: str | int) -> np.ndarray:
        k = label if isinstance(label, int) else self.class_labels.index(label)
        return self.X[self.y == k]


def standardization_stats(runs: Sequence[Run]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean / std over normal-operation rows (all rows if none are normal)."""
    rows = [r.normal_rows() for r in runs]
    rows = [x for x in rows if len(x)]
    if not rows:
        rows = [r.data for r in runs]
    stacked = np.concatenate(rows, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[~(std > 1e-12)] = 1.0
    return mean, std


def extract_windows(runs, class_labels, window_len, stride, mean, std):
    """Label windows: fully pre-onset -> normal, fully post-onset -> run label; straddlers dropped."""
    if window_len < 2:
        raise DatasetError("window_len must be >= 2")
    if stride < 1:
        raise DatasetError("stride must be >= 1")
    longest = max((len(r.data) for r in runs), default=0)
    if stride > longest:
        raise DatasetError(f"stride {stride} exceeds the longest run ({longest} samples)")
    xs, ys, index = [], [], []
    for ri, run in enumerate(runs):
        T = len(run.data)
        if window_len > T:
            raise DatasetError(f"window_len {window_len} exceeds run {ri} length {T}")
        z = (run.data - mean) / std
        fault_k = class_labels.index(run.label)
        for start in range(0, T - window_len + 1, stride):
            end = start + window_len
            if not run.is_faulty:
                k, offset = 0, None
            elif end <= run.onset_index:
                k, offset = 0, None
            elif start >= run.onset_index:
                k, offset = fault_k, start - run.onset_index
            else:
                continue
            xs.append(z[start:end])
            ys.append(k)
            index.append(WindowIndex(ri, start, offset))
    if not xs:
        raise DatasetError("no usable windows (every window straddles a fault onset or runs are too short)")
    return np.stack(xs), np.asarray(ys, dtype=np.int64), index


def _run_seeds(root: int, scenario_idx: int, run_idx: int) -> tuple[int, int]:
    state = np.random.SeedSequence([root, scenario_idx, run_idx]).generate_state(2)
    return int(state[0]), int(state[1])


def generate_dataset(
    spec: ProcessSpec,
    scenarios: Sequence[FaultScenario],
    runs_per_scenario: int,
    window_len: int,
    stride: int,
    seed: int = 0,
    normal_runs: int = 0,
) -> Dataset:
    """Simulate every scenario ``runs_per_scenario`` times and cut labeled windows.

    Class 0 is normal operation; scenario ``i`` becomes class ``i + 1``.
    ``normal_runs`` adds fault-free runs.
    """
    if runs_per_scenario < 1:
        raise DatasetError("runs_per_scenario must be >= 1")
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids) or NORMAL in ids:
        raise DatasetError(f"scenario ids must be unique and differ from {NORMAL!r}: {ids}")
    runs = []
    for r in range(normal_runs):
        sensor_seed, _ = _run_seeds(seed, 0, r)
        runs.append(Run(simulate(spec, None, sensor_seed).data, NORMAL, None, sensor_seed))
    for si, sc in enumerate(scenarios, start=1):
        for r in range(runs_per_scenario):
            sensor_seed, fault_seed = _run_seeds(seed, si, r)
            res = simulate(spec, sc.with_seed(fault_seed), sensor_seed)
            runs.append(Run(res.data, sc.id, sc.onset_index, sensor_seed))
    mean, std = standardization_stats(runs)
    ds = Dataset(CHANNELS, runs, [NORMAL, *ids], mean, std)
    return ds.windowed(window_len, stride)


# -- persistence -----------------------------------------------------------


def save_dataset(ds: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "runs").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, run in enumerate(ds.runs):
        name = f"runs/run_{i:03d}.csv"
        lines = [",".join(format(v, ".17g") for v in row) for row in run.data]
        atomic_write(directory / name, ("\n".join(lines) + "\n").encode())
        entries.append({"file": name, "label": run.label, "onset_index": run.onset_index,
                        "seed": run.seed, "rows": len(run.data)})
    manifest = {
        "layout_version": LAYOUT_VERSION,
        "schema": list(ds.schema),
        "class_labels": ds.class_labels,
        "mean": [float(v) for v in ds.mean],
        "std": [float(v) for v in ds.std],
        "window_len": ds.window_len,
        "stride": ds.stride,
        "runs": entries,
    }
    atomic_write(directory / MANIFEST, json.dumps(manifest, indent=2).encode())
    return directory


def load_dataset(directory, producer: str = "simulate") -> Dataset:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.is_file():
        raise MissingArtifactError(path, producer)
    manifest = json.loads(path.read_text())
    if manifest.get("layout_version") != LAYOUT_VERSION:
        raise DatasetError(f"unsupported dataset layout version {manifest.get('layout_version')}")
    runs = []
    for e in manifest["runs"]:
        data = np.loadtxt(directory / e["file"], delimiter=",", ndmin=2)
        if len(data) != e["rows"]:
            raise DatasetError(f"{e['file']}: expected {e['rows']} rows, found {len(data)}")
        runs.append(Run(data, e["label"], e["onset_index"], e["seed"]))
    ds = Dataset(tuple(manifest["schema"]), runs, manifest["class_labels"],
                 np.array(manifest["mean"]), np.array(manifest["std"]))
    if manifest.get("window_len"):
        ds = ds.windowed(manifest["window_len"], manifest["stride"])
    return ds
