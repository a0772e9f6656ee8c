"""Experiment configuration: a JSON document with one object per pipeline stage.

Unknown keys are rejected at every level. All randomness derives from the
single root ``seed``; see :func:`stage_seed`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .procsim.process import SIM_SCENARIOS, STEP_SCENARIOS

STAGES = ("simulate", "ingest", "train", "attribute", "analyze", "report")


@dataclass
class CsvSource:
    path: str
    label: str | int | None = None
    onset: int | None = None


@dataclass
class DatasetSettings:
    source: str = "simulator"            # "simulator" or "csv"
    scenarios: list[str] = field(default_factory=lambda: list(STEP_SCENARIOS))
    runs_per_scenario: int = 10
    normal_runs: int = 0
    duration: int = 500
    window_len: int = 20
    stride: int = 10
    holdout_fraction: float = 0.3
    csv: list[CsvSource] = field(default_factory=list)
    schema: int = 52


@dataclass
class ModelSettings:
    hidden_size: int = 32
    learning_rate: float = 5e-3
    epochs: int = 20
    batch_size: int = 32
    weight_decay: float = 1.0


@dataclass
class AttributionSettings:
    methods: list[str] = field(default_factory=lambda: ["ig", "shap"])
    baseline: str = "normal_mean"
    ig_steps: int = 64
    num_permutations: int = 200
    windows_per_fault: int | None = None


@dataclass
class AnalysisSettings:
    horizon: int = 100
    k: int = 3
    normalization: str = "zscore"
    subsystem_map: str = "auto"         # "auto", "simulator", "tep", or a JSON path


@dataclass
class ReportSettings:
    threshold: float = 0.5
    decimals: int = 2
    plot_channels: int = 3


@dataclass
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    attribution: AttributionSettings = field(default_factory=AttributionSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    report: ReportSettings = field(default_factory=ReportSettings)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def validate(self):
        d = self.dataset
        if d.source not in ("simulator", "csv"):
            raise ConfigError(f"dataset.source must be 'simulator' or 'csv', got {d.source!r}")
        if d.source == "csv":
            if not d.csv:
                raise ConfigError("dataset.source is 'csv' but dataset.csv lists no files")
            for src in d.csv:
                if not self.resolve(src.path).is_file():
                    raise ConfigError(f"dataset.csv file not found: {self.resolve(src.path)}")
        else:
            known = set(SIM_SCENARIOS)
            bad = [s for s in d.scenarios if s not in known]
            if bad or not d.scenarios:
                raise ConfigError(f"unknown or missing scenarios {bad}; known: {sorted(known)}")
        if not 0 <= d.holdout_fraction < 1:
            raise ConfigError("dataset.holdout_fraction must lie in [0, 1)")
        if d.schema not in (52, 53):
            raise ConfigError("dataset.schema must be 52 or 53")
        bad = [m for m in self.attribution.methods if m not in ("ig", "shap")]
        if bad or not self.attribution.methods:
            raise ConfigError(f"attribution.methods must be a non-empty subset of ['ig', 'shap'], got {self.attribution.methods}")
        if self.attribution.baseline not in ("zeros", "normal_mean"):
            raise ConfigError("attribution.baseline must be 'zeros' or 'normal_mean'")
        if self.analysis.k < 1:
            raise ConfigError("analysis.k must be >= 1")
        if self.analysis.normalization != "zscore":
            raise ConfigError("analysis.normalization supports only 'zscore'")
        if self.analysis.horizon < d.window_len:
            raise ConfigError("analysis.horizon must be at least dataset.window_len")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return self

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def subsystem_map_source(self):
        s = self.analysis.subsystem_map
        if s == "auto":
            return "simulator" if self.dataset.source == "simulator" else "tep"
        if s in ("simulator", "tep"):
            return s
        return self.resolve(s)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


def _strict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}; allowed: {sorted(names)}")
    return dict(data)


_SECTIONS = {
    "dataset": DatasetSettings,
    "model": ModelSettings,
    "attribution": AttributionSettings,
    "analysis": AnalysisSettings,
    "report": ReportSettings,
}


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    top = _strict(ExperimentConfig, data, "config")
    kwargs = {}
    for key, value in top.items():
        if key in _SECTIONS:
            section = _strict(_SECTIONS[key], value, key)
            if key == "dataset" and "csv" in section:
                section["csv"] = [CsvSource(**_strict(CsvSource, c, "dataset.csv[]")) for c in section["csv"]]
            try:
                kwargs[key] = _SECTIONS[key](**section)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs, base_dir=Path(base_dir)).validate()


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON config; ``None`` gives the built-in defaults."""
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data, base_dir=path.parent)


def stage_seed(root: int, stage: str) -> int:
    """Seed for one pipeline stage, split deterministically from the root seed."""
    return int(np.random.SeedSequence([root, STAGES.index(stage)]).generate_state(1)[0])
