"""LSTM window classifier built on :mod:`faultxai.diffcore`.

One LSTM layer reads a ``[window_len, num_features]`` window; the final
hidden state feeds a dense layer producing one logit per class.  Training is
backpropagation through time with Adam.  Inputs are expected in standardized
units; the per-channel statistics used for that travel with the model.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .errors import ModelFormatError, ShapeError, TrainingError

log = logging.getLogger(__name__)

FORMAT_MAGIC = b"FXAIMODEL\n"
FORMAT_VERSION = 1
GATE_ORDER = ("input", "forget", "cell", "output")
PARAM_NAMES = ("W", "b", "W_out", "b_out")


@dataclass(frozen=True)
class ModelConfig:
    num_features: int
    window_len: int
    num_classes: int
    hidden_size: int = 64
    learning_rate: float = 5e-3
    epochs: int = 30
    batch_size: int = 32
    rng_seed: int = 0
    grad_clip: float = 5.0
    weight_decay: float = 0.0  # decoupled (AdamW-style), applied to weight matrices only

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.hidden_size < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("hidden_size and batch_size must be >= 1, epochs >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class TimeSeriesWindow:
    values: np.ndarray  # [window_len, num_features], standardized
    label: int | None = None
    onset_index: int | None = None

    def __post_init__(self):
        self.values = dc.as_tensor(self.values)
        if self.values.ndim != 2:
            raise ShapeError("window", f"expected a 2-D window, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("window contains missing or non-finite entries")


@dataclass
class TrainingLog:
    initial_loss: float
    epoch_loss: list[float] = field(default_factory=list)  # running mean over each epoch's batches
    final_loss: float | None = None  # full-set loss after the last update
    train_accuracy: float | None = None


def build_lstm_graph(config: ModelConfig) -> dc.Graph:
    """Unrolled single-layer LSTM + dense head.

    Outputs: ``logits`` [B, K], ``loss`` (mean cross-entropy given the
    ``targets`` leaf holding ``-onehot / B``) and ``selected``
    (``sum(mask * logits)``, used to pull per-sample logit gradients).
    """
    M, T, H, K = config.num_features, config.window_len, config.hidden_size, config.num_classes
    g = dc.GraphBuilder()
    x = g.input("x", (None, T, M))
    h = g.input("h0", (None, H))
    c = g.input("c0", (None, H))
    W = g.param("W", (M + H, 4 * H))
    b = g.param("b", (4 * H,))
    W_out = g.param("W_out", (H, K))
    b_out = g.param("b_out", (K,))
    for t in range(T):
        xt = g.slice(x, axis=1, start=t, squeeze=True, name=f"x_{t}")
        z = g.add(g.matmul(g.concat([xt, h], axis=1), W), b, name=f"gates_{t}")
        i_gate = g.sigmoid(g.slice(z, 1, 0, H))
        f_gate = g.sigmoid(g.slice(z, 1, H, 2 * H))
        cand = g.tanh(g.slice(z, 1, 2 * H, 3 * H))
        o_gate = g.sigmoid(g.slice(z, 1, 3 * H, 4 * H))
        c = g.add(g.mul(f_gate, c), g.mul(i_gate, cand), name=f"c_{t}")
        h = g.mul(o_gate, g.tanh(c), name=f"h_{t}")
    logits = g.add(g.matmul(h, W_out), b_out, name="logits")
    targets = g.input("targets", (None, K))
    loss = g.sum(g.mul(targets, g.log_softmax(logits)), name="loss")
    mask = g.input("mask", (None, K))
    selected = g.sum(g.mul(mask, logits), name="selected")
    return g.build({"logits": logits, "loss": loss, "selected": selected})


def init_parameters(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    M, H, K = config.num_features, config.hidden_size, config.num_classes
    bound = 1.0 / np.sqrt(H)
    W = rng.uniform(-bound, bound, size=(M + H, 4 * H))
    b = np.zeros(4 * H)
    b[H : 2 * H] = 1.0  # forget-gate bias
    out_bound = np.sqrt(6.0 / (H + K))
    W_out = rng.uniform(-out_bound, out_bound, size=(H, K))
    return {"W": W, "b": b, "W_out": W_out, "b_out": np.zeros(K)}


class SequenceModel:
    """A trained (or hand-set) LSTM classifier.

    The instance is treated as immutable once constructed; ``predict`` and
    ``input_gradient`` hold no state between calls.
    """

    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, np.ndarray],
        class_labels: Sequence[str] | None = None,
        feature_names: Sequence[str] | None = None,
        feature_mean: np.ndarray | None = None,
        feature_std: np.ndarray | None = None,
    ):
        self.config = config
        M, H, K = config.num_features, config.hidden_size, config.num_classes
        expected = {"W": (M + H, 4 * H), "b": (4 * H,), "W_out": (H, K), "b_out": (K,)}
        self.params = {}
        for name, shape in expected.items():
            if name not in params:
                raise ModelFormatError(f"missing parameter {name!r}")
            arr = dc.as_tensor(params[name]).copy()
            if arr.shape != shape:
                raise ModelFormatError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            self.params[name] = arr
        self.class_labels = list(class_labels) if class_labels is not None else [str(k) for k in range(K)]
        if len(self.class_labels) != K:
            raise ModelFormatError(f"{len(self.class_labels)} class labels for {K} classes")
        self.feature_names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(M)]
        if len(self.feature_names) != M:
            raise ModelFormatError(f"{len(self.feature_names)} feature names for {M} features")
        self.feature_mean = np.zeros(M) if feature_mean is None else dc.as_tensor(feature_mean).copy()
        self.feature_std = np.ones(M) if feature_std is None else dc.as_tensor(feature_std).copy()
        self._graph = build_lstm_graph(config)

    @property
    def num_features(self) -> int:
        return self.config.num_features

    @property
    def window_len(self) -> int:
        return self.config.window_len

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    # -- evaluation -----------------------------------------------------

    def _batch(self, X) -> np.ndarray:
        if isinstance(X, TimeSeriesWindow):
            X = X.values
        X = dc.as_tensor(X)
        if X.ndim == 2:
            X = X[None]
        T, M = self.config.window_len, self.config.num_features
        if X.ndim != 3 or X.shape[1:] != (T, M):
            raise ShapeError("x", f"window shape {X.shape[-2:]} does not match model ({T}, {M})")
        return X

    def _bindings(self, X):
        B = X.shape[0]
        H = self.config.hidden_size
        zeros = np.zeros((B, H))
        return {"x": X, "h0": zeros, "c0": zeros, **self.params}

    def class_index(self, target) -> int:
        if isinstance(target, (int, np.integer)) and not isinstance(target, bool):
            if 0 <= target < self.num_classes:
                return int(target)
        elif target in self.class_labels:
            return self.class_labels.index(target)
        raise ValueError(f"invalid target class {target!r}; model classes are {self.class_labels}")

    def logits(self, X, chunk: int = 4096) -> np.ndarray:
        """Pre-softmax outputs for a window ``[T, M]`` or batch ``[B, T, M]`` -> ``[B, K]``."""
        X = self._batch(X)
        out_node = self._graph.outputs["logits"]
        parts = []
        for s in range(0, X.shape[0], chunk):
            vals = dc.forward(self._graph, self._bindings(X[s : s + chunk]), outputs=[out_node])
            parts.append(vals[out_node])
        return np.concatenate(parts, axis=0) if parts else np.zeros((0, self.num_classes))

    def predict_proba(self, X) -> np.ndarray:
        return dc._softmax(self.logits(X))

    def predict(self, window) -> np.ndarray:
        """Class-probability vector for one window."""
        return self.predict_proba(window)[0]

    def classify(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def logit_gradient(self, X, target) -> np.ndarray:
        """d logit[target] / d x for every window in the batch -> ``[B, T, M]``.

        ``target`` is a class (index or label) or an int array with one class per window.
        """
        X = self._batch(X)
        B, K = X.shape[0], self.num_classes
        mask = np.zeros((B, K))
        if np.ndim(target) == 0:
            mask[:, self.class_index(target)] = 1.0
        else:
            idx = [self.class_index(int(t)) for t in target]
            mask[np.arange(B), idx] = 1.0
        bind = self._bindings(X)
        bind["mask"] = mask
        seed = self._graph.outputs["selected"]
        vals = dc.forward(self._graph, bind, outputs=[seed])
        return dc.backward(self._graph, vals, seed, ["x"])["x"]

    def input_gradient(self, window, target_class) -> np.ndarray:
        """Gradient of the target-class logit w.r.t. every entry of one window."""
        return self.logit_gradient(window, target_class)[0]

    def standardize(self, raw) -> np.ndarray:
        return (dc.as_tensor(raw) - self.feature_mean) / self.feature_std

    # -- persistence ----------------------------------------------------

    def save(self) -> bytes:
        arrays = {**self.params, "feature_mean": self.feature_mean, "feature_std": self.feature_std}
        header = {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "class_labels": self.class_labels,
            "feature_names": self.feature_names,
            "arrays": [],
        }
        blob = io.BytesIO()
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f8")
            header["arrays"].append({"name": name, "shape": list(arr.shape), "offset": blob.tell()})
            blob.write(arr.tobytes())
        head = json.dumps(header, sort_keys=True).encode()
        return FORMAT_MAGIC + struct.pack("<Q", len(head)) + head + blob.getvalue()

    @classmethod
    def load(cls, data: bytes) -> "SequenceModel":
        if not data.startswith(FORMAT_MAGIC):
            raise ModelFormatError("not a faultxai model file")
        pos = len(FORMAT_MAGIC)
        try:
            (n,) = struct.unpack_from("<Q", data, pos)
            header = json.loads(data[pos + 8 : pos + 8 + n])
        except (struct.error, ValueError) as exc:
            raise ModelFormatError(f"corrupt model header: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(
                f"model format version {header.get('format_version')} unsupported (expected {FORMAT_VERSION})"
            )
        body = data[pos + 8 + n :]
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            start = entry["offset"]
            if start + 8 * count > len(body):
                raise ModelFormatError(f"array {entry['name']!r} truncated")
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=start)
            arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
        config = ModelConfig(**header["config"])
        params = {k: arrays[k] for k in PARAM_NAMES if k in arrays}
        return cls(
            config,
            params,
            class_labels=header["class_labels"],
            feature_names=header["feature_names"],
            feature_mean=arrays.get("feature_mean"),
            feature_std=arrays.get("feature_std"),
        )


def _check_training_set(X, y, config):
    if X.ndim != 3 or X.shape[0] == 0:
        raise TrainingError(f"training set is empty or malformed (shape {X.shape})")
    if X.shape[1:] != (config.window_len, config.num_features):
        raise ShapeError("x", f"windows of shape {X.shape[1:]} do not match config "
                              f"({config.window_len}, {config.num_features})")
    if len(y) != X.shape[0]:
        raise TrainingError(f"{len(y)} labels for {X.shape[0]} windows")
    if len(np.unique(y)) < 2:
        raise TrainingError("training set must contain at least 2 classes")
    if y.min() < 0 or y.max() >= config.num_classes:
        raise TrainingError(f"labels must lie in [0, {config.num_classes})")
    if not np.all(np.isfinite(X)):
        raise TrainingError("training windows contain non-finite values")


def train(
    windows,
    labels,
    config: ModelConfig,
    class_labels: Sequence[str] | None = None,
    feature_names: Sequence[str] | None = None,
    feature_mean=None,
    feature_std=None,
) -> tuple[SequenceModel, TrainingLog]:
    """Fit an LSTM classifier with minibatch Adam; deterministic given ``config.rng_seed``."""
    X = dc.as_tensor(windows)
    y = np.asarray(labels, dtype=np.int64)
    _check_training_set(X, y, config)

    rng = np.random.default_rng(config.rng_seed)
    params = init_parameters(config, rng)
    graph = build_lstm_graph(config)
    loss_node = graph.outputs["loss"]
    H, K = config.hidden_size, config.num_classes
    onehot = np.eye(K)[y]

    def batch_loss(idx, want_grad):
        B = len(idx)
        zeros = np.zeros((B, H))
        bind = {"x": X[idx], "h0": zeros, "c0": zeros, "targets": -onehot[idx] / B, **params}
        vals = dc.forward(graph, bind, outputs=[loss_node])
        loss = float(vals[loss_node])
        grads = dc.backward(graph, vals, loss_node, PARAM_NAMES) if want_grad else None
        return loss, grads

    def full_loss():
        total = 0.0
        for s in range(0, len(y), 1024):
            idx = np.arange(s, min(s + 1024, len(y)))
            total += batch_loss(idx, False)[0] * len(idx)
        return total / len(y)

    history = TrainingLog(initial_loss=full_loss())
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(val) for k, val in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        running, seen = 0.0, 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            loss, grads = batch_loss(idx, True)
            if not np.isfinite(loss):
                norms = {k: float(np.linalg.norm(p)) for k, p in params.items()}
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {s}; parameter norms {norms}"
                )
            gnorm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if gnorm > config.grad_clip:
                grads = {k: g * (config.grad_clip / gnorm) for k, g in grads.items()}
            step += 1
            for k in params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                mhat = m[k] / (1 - beta1**step)
                vhat = v[k] / (1 - beta2**step)
                params[k] = params[k] - config.learning_rate * mhat / (np.sqrt(vhat) + eps)
                if config.weight_decay and k in ("W", "W_out"):
                    params[k] = params[k] * (1.0 - config.learning_rate * config.weight_decay)
            running += loss * len(idx)
            seen += len(idx)
        history.epoch_loss.append(running / seen)
        log.debug("epoch %d loss %.5f", epoch, history.epoch_loss[-1])

    history.final_loss = full_loss()
    if history.final_loss >= history.initial_loss:
        log.warning("training did not reduce the loss (%.4g -> %.4g)", history.initial_loss, history.final_loss)
    model = SequenceModel(config, params, class_labels, feature_names, feature_mean, feature_std)
    history.train_accuracy = float(np.mean(model.classify(X) == y))
    return model, history
