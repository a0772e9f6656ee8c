"""Per-channel attributions for a single window decision.

Works with any model exposing ``logits(X) -> [B, K]`` for a batch of
windows ``[B, T, M]``; Integrated Gradients additionally needs
``logit_gradient(X, target) -> [B, T, M]``.  A *feature* is one sensor
channel across the whole window: Shapley coalitions switch whole channels
between the window and the baseline, and IG scores are summed over time.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AttributionError, ShapeError

METHODS = ("IG", "SHAP_exact", "SHAP_sampled")
EXACT_SHAPLEY_MAX_FEATURES = 16
BASELINE_KINDS = ("zeros", "normal_mean", "custom")


@dataclass
class Baseline:
    values: np.ndarray  # [window_len, num_features]
    provenance: str = "custom"

    def __post_init__(self):
        if self.provenance not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline provenance {self.provenance!r}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("baseline", f"baseline must be 2-D, got {self.values.shape}")


@dataclass
class AttributionMap:
    method: str
    target_class: int
    scores: np.ndarray                     # [M], summed over timesteps
    feature_names: list[str]
    per_timestep: np.ndarray | None = None  # [T, M] (IG only)
    diagnostics: dict = field(default_factory=dict)
    fault_class: str | None = None         # label of the window's run, when known
    window_offset: int | None = None       # window start minus fault onset

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attribution method {self.method!r}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.feature_names) != len(self.scores):
            raise ShapeError("scores", f"{len(self.scores)} scores for {len(self.feature_names)} features")

    @property
    def method_family(self) -> str:
        """``IG`` or ``SHAP``, used when pairing methods in the analysis."""
        return "IG" if self.method == "IG" else "SHAP"

    def to_csv(self) -> str:
        return attribution_to_csv(self)


# -- helpers -----------------------------------------------------------------


def _window_and_baseline(model, window, baseline):
    x = np.ascontiguousarray(getattr(window, "values", window), dtype=np.float64)
    b = getattr(baseline, "values", baseline)
    b = np.zeros_like(x) if b is None else np.ascontiguousarray(b, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("window", f"expected [T, M] window, got {x.shape}")
    if b.shape != x.shape:
        raise ShapeError("baseline", f"baseline shape {b.shape} differs from window {x.shape}")
    T, M = getattr(model, "window_len", x.shape[0]), getattr(model, "num_features", x.shape[1])
    if x.shape != (T, M):
        raise ShapeError("window", f"window shape {x.shape} does not match model ({T}, {M})")
    return x, b


def _feature_names(model, M):
    names = getattr(model, "feature_names", None)
    return list(names) if names is not None and len(names) == M else [f"f{i}" for i in range(M)]


def resolve_target(model, x, target_class) -> int:
    """Explicit class (index or label) or, if None, the predicted class for ``x``."""
    if target_class is None:
        return int(np.argmax(model.logits(x[None])[0]))
    if hasattr(model, "class_index"):
        return model.class_index(target_class)
    k = int(target_class)
    if not 0 <= k < model.num_classes:
        raise ValueError(f"invalid target class {target_class!r}")
    return k


# -- Integrated Gradients ----------------------------------------------------


def _ig_once(model, x, b, k, steps, chunk):
    alphas = (np.arange(steps) + 0.5) / steps
    delta = x - b
    grad_sum = np.zeros_like(x)
    for s in range(0, steps, chunk):
        a = alphas[s : s + chunk, None, None]
        g = model.logit_gradient(b[None] + a * delta[None], k)
        if not np.all(np.isfinite(g)):
            raise AttributionError("non-finite gradient along the integration path")
        grad_sum += g.sum(axis=0)
    return delta * (grad_sum / steps)


def integrated_gradients(
    model,
    window,
    baseline=None,
    target_class=None,
    steps: int = 64,
    escalate_steps: int | None = 256,
    rtol: float = 1e-3,
    atol: float = 1e-6,
    chunk: int = 256,
) -> AttributionMap:
    """Integrated Gradients with the midpoint rule on ``steps`` intervals.

    If the completeness gap exceeds ``rtol*|F(x) - F(x')| + atol`` and
    ``escalate_steps`` is larger than ``steps``, the integral is recomputed
    once with ``escalate_steps`` intervals.  ``baseline=None`` means zeros.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x, b = _window_and_baseline(model, window, baseline)
    k = resolve_target(model, x, target_class)
    f_x, f_b = model.logits(np.stack([x, b]))[:, k]
    delta_f = f_x - f_b
    tol = rtol * abs(delta_f) + atol

    per_t = _ig_once(model, x, b, k, steps, chunk)
    gap = abs(per_t.sum() - delta_f)
    used = steps
    if gap > tol and escalate_steps is not None and escalate_steps > steps:
        per_t = _ig_once(model, x, b, k, escalate_steps, chunk)
        gap = abs(per_t.sum() - delta_f)
        used = escalate_steps
    return AttributionMap(
        method="IG",
        target_class=k,
        scores=per_t.sum(axis=0),
        feature_names=_feature_names(model, x.shape[1]),
        per_timestep=per_t,
        diagnostics={
            "completeness_gap": float(gap),
            "completeness_tol": float(tol),
            "steps": used,
            "f_x": float(f_x),
            "f_baseline": float(f_b),
        },
    )


# -- Shapley values ----------------------------------------------------------


def _materialize(x, b, masks):
    """Coalition windows: present channels from ``x``, absent ones from ``b`` -> [C, T, M]."""
    return np.where(masks[:, None, :], x[None], b[None])


# ~128 coalitions per call keeps each recurrent step's arrays in cache; 4096 runs ~30% slower
def _coalition_values(model, x, b, masks, k, chunk):
    out = np.empty(len(masks))
    for s in range(0, len(masks), chunk):
        out[s : s + chunk] = model.logits(_materialize(x, b, masks[s : s + chunk]))[:, k]
    return out


def shapley_weights(M: int) -> np.ndarray:
    """``w[s] = s! (M - s - 1)! / M!`` for coalitions of size ``s`` not containing the player."""
    return np.array([math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M) for s in range(M)])


def shapley_exact(model, window, baseline=None, target_class=None, chunk: int = 128) -> AttributionMap:
    """Exact Shapley values of the channel game by enumerating all 2^M coalitions."""
    x, b = _window_and_baseline(model, window, baseline)
    M = x.shape[1]
    if M > EXACT_SHAPLEY_MAX_FEATURES:
        raise AttributionError(
            f"exact Shapley enumeration needs 2^{M} model calls; M={M} exceeds "
            f"{EXACT_SHAPLEY_MAX_FEATURES}. Use shapley_sampled() instead."
        )
    k = resolve_target(model, x, target_class)
    codes = np.arange(1 << M)
    masks = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)
    v = _coalition_values(model, x, b, masks, k, chunk)
    sizes = masks.sum(axis=1)
    w = shapley_weights(M)
    phi = np.empty(M)
    for i in range(M):
        without = codes[~masks[:, i]]
        terms = w[sizes[without]] * (v[without | (1 << i)] - v[without])
        phi[i] = math.fsum(terms.tolist())  # order-independent sum
    f_x, f_b = v[-1], v[0]
    return AttributionMap(
        method="SHAP_exact",
        target_class=k,
        scores=phi,
        feature_names=_feature_names(model, M),
        diagnostics={
            "efficiency_gap": float(abs(math.fsum(phi.tolist()) - (f_x - f_b))),
            "f_x": float(f_x),
            "f_baseline": float(f_b),
            "coalitions": int(1 << M),
        },
    )


def shapley_sampled(
    model,
    window,
    baseline=None,
    target_class=None,
    num_permutations: int = 500,
    rng_seed: int = 0,
    chunk: int = 128,
) -> AttributionMap:
    """Permutation-sampling Shapley estimate with antithetic pairs.

    Each of the ``num_permutations`` random orderings is evaluated together
    with its reverse; the per-feature standard error is taken over the pair
    means.  Each ordering's marginals telescope to ``f(x) - f(baseline)``.
    """
    if num_permutations < 1:
        raise ValueError("num_permutations must be >= 1")
    x, b = _window_and_baseline(model, window, baseline)
    T, M = x.shape
    k = resolve_target(model, x, target_class)
    rng = np.random.default_rng(rng_seed)
    perms = np.stack([rng.permutation(M) for _ in range(num_permutations)])
    orders = np.empty((2 * num_permutations, M), dtype=np.int64)
    orders[0::2] = perms
    orders[1::2] = perms[:, ::-1]

    f_b, f_x = model.logits(np.stack([b, x]))[:, k]
    # interior prefixes (sizes 1..M-1) of every ordering
    n_orders = len(orders)
    rank = np.empty_like(orders)
    rank[np.arange(n_orders)[:, None], orders] = np.arange(M)
    sizes = np.arange(1, M)
    masks = (rank[:, None, :] < sizes[None, :, None]).reshape(-1, M)
    inner = _coalition_values(model, x, b, masks, k, chunk).reshape(n_orders, M - 1)
    chain = np.concatenate([np.full((n_orders, 1), f_b), inner, np.full((n_orders, 1), f_x)], axis=1)
    step_gain = np.diff(chain, axis=1)  # [orders, M], gain of the feature added at each position
    marginals = np.empty((n_orders, M))
    marginals[np.arange(n_orders)[:, None], orders] = step_gain
    pair_means = 0.5 * (marginals[0::2] + marginals[1::2])
    phi = pair_means.mean(axis=0)
    if num_permutations > 1:
        stderr = pair_means.std(axis=0, ddof=1) / np.sqrt(num_permutations)
    else:
        stderr = np.zeros(M)
    return AttributionMap(
        method="SHAP_sampled",
        target_class=k,
        scores=phi,
        feature_names=_feature_names(model, M),
        diagnostics={
            "efficiency_gap": float(abs(phi.sum() - (f_x - f_b))),
            "stderr": stderr,
            "num_permutations": num_permutations,
            "f_x": float(f_x),
            "f_baseline": float(f_b),
        },
    )


def shapley(model, window, baseline=None, target_class=None, num_permutations=500, rng_seed=0):
    """Exact enumeration when the channel count allows it, permutation sampling otherwise."""
    M = np.shape(getattr(window, "values", window))[1]
    if M <= EXACT_SHAPLEY_MAX_FEATURES:
        return shapley_exact(model, window, baseline, target_class)
    return shapley_sampled(model, window, baseline, target_class, num_permutations, rng_seed)


# -- baselines ---------------------------------------------------------------


def make_baseline(dataset, kind: str = "zeros", values=None) -> Baseline:
    """Reference window for IG paths and Shapley coalitions.

    ``dataset`` is a windowed dataset (``X``, ``y`` with class 0 = normal) or
    anything with ``window_len`` and ``num_features`` for ``zeros``/``custom``.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    T, M = dataset.window_len, dataset.num_features
    if kind == "zeros":
        return Baseline(np.zeros((T, M)), "zeros")
    if kind == "custom":
        if values is None:
            raise ValueError("custom baseline needs values")
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (T, M):
            raise ShapeError("baseline", f"custom baseline shape {arr.shape} does not match ({T}, {M})")
        return Baseline(arr, "custom")
    X, y = getattr(dataset, "X", None), getattr(dataset, "y", None)
    if X is None or not np.any(y == 0):
        raise AttributionError("normal_mean baseline needs at least one normal-class window")
    channel_mean = X[y == 0].mean(axis=(0, 1))
    return Baseline(np.tile(channel_mean, (T, 1)), "normal_mean")


# -- CSV ---------------------------------------------------------------------

CSV_COLUMNS = ("feature", "method", "target_class", "score", "per_timestep_sum", "stderr",
               "completeness_gap", "efficiency_gap", "f_x", "f_baseline", "fault_class", "window_offset")


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def attribution_to_csv(amap: AttributionMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    d = amap.diagnostics
    stderr = d.get("stderr")
    col_sums = None if amap.per_timestep is None else amap.per_timestep.sum(axis=0)
    for i, name in enumerate(amap.feature_names):
        w.writerow([
            name, amap.method, amap.target_class, _fmt(amap.scores[i]),
            "" if col_sums is None else _fmt(col_sums[i]),
            "" if stderr is None else _fmt(stderr[i]),
            _fmt(d.get("completeness_gap")), _fmt(d.get("efficiency_gap")),
            _fmt(d.get("f_x")), _fmt(d.get("f_baseline")),
            amap.fault_class or "", "" if amap.window_offset is None else amap.window_offset,
        ])
    return buf.getvalue()


def attribution_from_csv(text: str) -> AttributionMap:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty attribution CSV")
    first = rows[0]

    def opt(key):
        return float(first[key]) if first[key] != "" else None

    diagnostics = {k: opt(k) for k in ("completeness_gap", "efficiency_gap", "f_x", "f_baseline") if opt(k) is not None}
    if first["stderr"] != "":
        diagnostics["stderr"] = np.array([float(r["stderr"]) for r in rows])
    return AttributionMap(
        method=first["method"],
        target_class=int(first["target_class"]),
        scores=np.array([float(r["score"]) for r in rows]),
        feature_names=[r["feature"] for r in rows],
        diagnostics=diagnostics,
        fault_class=first["fault_class"] or None,
        window_offset=int(first["window_offset"]) if first["window_offset"] != "" else None,
    )
