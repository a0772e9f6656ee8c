"""Post-fault aggregation of attributions and the comparisons built on it.

Pipeline per fault class and method: average the per-window scores over the
first ``horizon`` samples after onset, z-score across channels, take the top
``k`` channels, then compare methods (top-k overlap, Spearman rank
correlation) and check the top channels against the subsystem the fault is
known to affect.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .attribution import AttributionMap

DEFAULT_HORIZON = 100
DEFAULT_K = 3


@dataclass
class AggregatedScores:
    fault_class: str | None
    method: str
    mean_scores: np.ndarray
    num_windows: int
    feature_names: list[str]
    window_span: tuple[int, int] | None = None  # (first, last) window offset included

    def __post_init__(self):
        if self.num_windows < 1:
            raise ValueError("num_windows must be >= 1")


def _inside(amap: AttributionMap, horizon: int | None, window_len: int | None) -> bool:
    off = amap.window_offset
    if off is None or horizon is None:
        return True
    end = off + (window_len or 1)
    return off >= 0 and end <= horizon


def aggregate(
    maps: Sequence[AttributionMap],
    horizon: int | None = DEFAULT_HORIZON,
    window_len: int | None = None,
) -> AggregatedScores:
    """Elementwise mean of the maps whose windows lie inside the post-onset horizon.

    A map without a ``window_offset`` is always included.  With
    ``window_len`` the whole window must fit in the horizon, otherwise only
    its start.  Sums are exactly rounded, so input order does not matter.
    """
    if not maps:
        raise ValueError("aggregate() needs at least one attribution map")
    first = maps[0]
    for m in maps[1:]:
        if m.method != first.method:
            raise ValueError(f"mixed attribution methods: {first.method!r} and {m.method!r}")
        if m.fault_class != first.fault_class:
            raise ValueError(f"mixed fault classes: {first.fault_class!r} and {m.fault_class!r}")
        if list(m.feature_names) != list(first.feature_names):
            raise ValueError("attribution maps use different feature schemas")
    chosen = [m for m in maps if _inside(m, horizon, window_len)]
    if not chosen:
        raise ValueError(f"no attribution windows inside the {horizon}-sample horizon")
    S = np.stack([m.scores for m in chosen])
    mean = np.array([math.fsum(col) / len(chosen) for col in S.T.tolist()])
    offsets = [m.window_offset for m in chosen if m.window_offset is not None]
    span = (min(offsets), max(offsets)) if offsets else None
    return AggregatedScores(first.fault_class, first.method, mean, len(chosen), list(first.feature_names), span)


def normalize(scores) -> np.ndarray:
    """Z-score across channels, ``(s - mean) / std`` with the population std.

    A constant vector maps to zeros (with a warning).
    """
    s = np.asarray(getattr(scores, "mean_scores", scores), dtype=np.float64)
    sd = s.std()
    if not sd > 0:
        warnings.warn("attribution scores have zero variance; normalized scores set to 0", RuntimeWarning)
        return np.zeros_like(s)
    return (s - s.mean()) / sd


def top_k(scores, k: int = DEFAULT_K, names: Sequence[str] | None = None, tie_rule: str = "lower_index"):
    """The ``k`` largest entries, largest first; equal scores keep the lower channel index first."""
    if tie_rule != "lower_index":
        raise ValueError(f"unsupported tie rule {tie_rule!r}")
    s = np.asarray(scores, dtype=np.float64)
    if not 1 <= k <= len(s):
        raise ValueError(f"k must lie in [1, {len(s)}], got {k}")
    order = np.lexsort((np.arange(len(s)), -s))[:k]
    if names is None:
        return [int(i) for i in order]
    return [names[i] for i in order]


@dataclass
class AgreementResult:
    top_k_overlap: float
    rank_correlation: float
    top_a: list
    top_b: list
    k: int


def agreement(a, b, k: int = DEFAULT_K, names: Sequence[str] | None = None) -> AgreementResult:
    """Top-k overlap ``|A & B| / k`` and Spearman correlation over all channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score vectors differ in length: {a.shape} vs {b.shape}")
    ta, tb = top_k(a, k, names), top_k(b, k, names)
    overlap = len(set(ta) & set(tb)) / k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = stats.spearmanr(a, b).statistic
    return AgreementResult(float(overlap), float(rho), ta, tb, k)


# -- subsystem localization --------------------------------------------------


@dataclass
class SubsystemMap:
    subsystems: dict[str, frozenset[str]]
    faults: dict[str, str]
    description: str = ""

    def __post_init__(self):
        self.subsystems = {k: frozenset(v) for k, v in self.subsystems.items()}
        for fault, sub in self.faults.items():
            if sub not in self.subsystems:
                raise ValueError(f"fault {fault!r} maps to unknown subsystem {sub!r}")

    def expected_channels(self, fault_class: str) -> frozenset[str]:
        if fault_class not in self.faults:
            raise KeyError(f"fault class {fault_class!r} is not in the subsystem map")
        return self.subsystems[self.faults[fault_class]]

    def validate(self, schema: Sequence[str]):
        known = set(schema)
        for name, chans in self.subsystems.items():
            missing = sorted(chans - known)
            if missing:
                raise ValueError(f"subsystem {name!r} references channels not in schema: {missing}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SubsystemMap":
        unknown = set(d) - {"subsystems", "faults", "description"}
        if unknown:
            raise ValueError(f"unknown keys in subsystem map: {sorted(unknown)}")
        return cls(dict(d["subsystems"]), dict(d["faults"]), d.get("description", ""))

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "subsystems": {k: sorted(v) for k, v in self.subsystems.items()},
            "faults": dict(self.faults),
        }


def load_subsystem_map(source) -> SubsystemMap:
    """Load a JSON subsystem map from a path, or one of the shipped maps: ``"tep"``, ``"simulator"``."""
    if source in ("tep", "simulator"):
        text = resources.files("faultxai.data").joinpath(f"subsystems_{source}.json").read_text()
    else:
        text = Path(source).read_text()
    return SubsystemMap.from_dict(json.loads(text))


@dataclass
class LocalizationResult:
    hit: bool
    matched: list[str]
    fraction: float
    top: list[str]
    expected: list[str] = field(default_factory=list)


def localization_score(normalized, smap: SubsystemMap, fault_class: str, k: int = DEFAULT_K,
                       names: Sequence[str] | None = None) -> LocalizationResult:
    """Whether the top-k channels touch the fault's expected channel set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if fault_class not in smap.faults:
        raise ValueError(f"unknown fault class {fault_class!r}")
    if names is None:
        raise ValueError("channel names are required to match against the subsystem map")
    expected = smap.expected_channels(fault_class)
    top = top_k(normalized, k, names)
    matched = [c for c in top if c in expected]
    return LocalizationResult(bool(matched), matched, len(matched) / k, top, sorted(expected))


def deviation_from_normal(faulty, normal, onset: int, horizon: int = DEFAULT_HORIZON,
                          normal_std=None) -> np.ndarray:
    """Per-channel mean |faulty - normal| over the post-onset horizon, in units of normal std.

    Lets one check whether a method's top channels are the ones deviating most.
    """
    faulty = np.asarray(faulty, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    seg = slice(onset, onset + horizon)
    dev = np.abs(faulty[seg] - normal[seg]).mean(axis=0)
    sd = normal[:onset].std(axis=0) if normal_std is None else np.asarray(normal_std, dtype=np.float64)
    sd = np.where(sd > 1e-12, sd, 1.0)
    return dev / sd


def format_score_table(names: Sequence[str], ig, shap, decimals: int = 2, groups: int = 4,
                       block_sizes: Sequence[int] | None = None) -> str:
    """Plain-text table of normalized scores in side-by-side blocks of (feature, IG, SHAP).

    ``block_sizes`` fixes how many features go in each block; otherwise the
    features are split into ``groups`` near-equal blocks.
    """
    ig = np.asarray(ig, dtype=np.float64)
    shap = np.asarray(shap, dtype=np.float64)
    if block_sizes is None:
        per = math.ceil(len(names) / groups)
        block_sizes = [min(per, len(names) - g * per) for g in range(groups)]
    if sum(block_sizes) != len(names) or min(block_sizes) < 0:
        raise ValueError(f"block sizes {list(block_sizes)} do not cover {len(names)} features")
    starts = np.cumsum([0, *block_sizes[:-1]])
    blocks = [list(range(s0, s0 + n)) for s0, n in zip(starts, block_sizes)]
    width = 10 + 2 * (decimals + 6)
    header = " | ".join(f"{'feature':<10} {'IG':>{decimals + 5}} {'SHAP':>{decimals + 5}}" for _ in blocks)
    lines = [header]
    for r in range(max(block_sizes)):
        cells = []
        for blk in blocks:
            if r < len(blk):
                i = blk[r]
                cells.append(f"{names[i]:<10} {ig[i]:>{decimals + 5}.{decimals}f} {shap[i]:>{decimals + 5}.{decimals}f}")
            else:
                cells.append(" " * width)
        while cells and not cells[-1].strip():
            cells.pop()
        lines.append(" | ".join(cells).rstrip())
    return "\n".join(lines)
