"""Small reference models with known structure, for checking attributions.

All expose the same surface as :class:`faultxai.seqmodel.SequenceModel`:
``logits``, ``logit_gradient``, ``window_len``, ``num_features``,
``num_classes``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import diffcore as dc
from .seqmodel import SequenceModel


class LinearModel:
    """``logit_k(x) = sum_{t,m} weights[k, t, m] * x[t, m] + bias[k]``."""

    def __init__(self, weights, bias=None, feature_names=None):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 2:
            w = w[None]
        self.weights = w
        self.num_classes, self.window_len, self.num_features = w.shape
        self.bias = np.zeros(self.num_classes) if bias is None else np.asarray(bias, dtype=np.float64)
        self.feature_names = feature_names

    @classmethod
    def from_channel_weights(cls, w, window_len=1):
        """Single-output model whose weight for channel ``m`` is ``w[m]`` at every timestep."""
        w = np.asarray(w, dtype=np.float64)
        return cls(np.tile(w, (window_len, 1)))

    def logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        return np.einsum("btm,ktm->bk", X, self.weights) + self.bias

    def logit_gradient(self, X, target):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        return np.broadcast_to(self.weights[int(target)], X.shape).copy()


class GraphModel:
    """Model on the flattened window whose logits come from a diffcore graph.

    The graph must have an input leaf ``x`` of shape ``[B, T*M]``, an output
    ``logits`` and a scalar output ``selected`` = ``sum(mask * logits)``.
    """

    def __init__(self, graph, params, window_len, num_features, num_classes):
        self.graph = graph
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.window_len = window_len
        self.num_features = num_features
        self.num_classes = num_classes
        self.feature_names = None

    def _flat(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        return X.reshape(len(X), -1)

    def logits(self, X):
        node = self.graph.outputs["logits"]
        vals = dc.forward(self.graph, {"x": self._flat(X), **self.params}, outputs=[node])
        return vals[node]

    def logit_gradient(self, X, target):
        flat = self._flat(X)
        mask = np.zeros((len(flat), self.num_classes))
        mask[:, int(target)] = 1.0
        seed = self.graph.outputs["selected"]
        vals = dc.forward(self.graph, {"x": flat, "mask": mask, **self.params}, outputs=[seed])
        g = dc.backward(self.graph, vals, seed, ["x"])["x"]
        return g.reshape(len(flat), self.window_len, self.num_features)


def _head(g, logits, K):
    mask = g.input("mask", (None, K))
    return {"logits": logits, "selected": g.sum(g.mul(mask, logits))}


def mlp_model(window_len, num_features, hidden=16, num_classes=1, seed=0, dead_features=(), scale=1.0):
    """Random one-hidden-layer tanh network; channels in ``dead_features`` get zero weights."""
    rng = np.random.default_rng(seed)
    D = window_len * num_features
    W1 = rng.normal(0.0, scale / np.sqrt(D), size=(D, hidden))
    for m in dead_features:
        W1.reshape(window_len, num_features, hidden)[:, m, :] = 0.0
    params = {
        "W1": W1,
        "b1": rng.normal(0.0, 0.5, size=hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, num_classes)),
        "b2": np.zeros(num_classes),
    }
    g = dc.GraphBuilder()
    x = g.input("x", (None, D))
    h = g.tanh(g.add(g.matmul(x, g.param("W1", (D, hidden))), g.param("b1", (hidden,))))
    logits = g.add(g.matmul(h, g.param("W2", (hidden, num_classes))), g.param("b2", (num_classes,)))
    return GraphModel(g.build(_head(g, logits, num_classes)), params, window_len, num_features, num_classes)


def factorized_linear_model(linear: LinearModel, inner: int = 4, seed: int = 0):
    """Two stacked linear layers whose product equals ``linear``'s weights.

    Different parameterization and depth, identical input-output function.
    """
    rng = np.random.default_rng(seed)
    K, T, M = linear.weights.shape
    D = T * M
    target = linear.weights.reshape(K, D).T  # [D, K]
    A = rng.normal(size=(D, inner))
    # B solves A @ B = target exactly when target lies in range(A); pad A with target's columns
    A = np.concatenate([A, target], axis=1)
    B = np.zeros((inner + K, K))
    B[inner:, :] = np.eye(K)
    g = dc.GraphBuilder()
    x = g.input("x", (None, D))
    h = g.matmul(x, g.param("A", (D, inner + K)))
    logits = g.add(g.matmul(h, g.param("B", (inner + K, K))), g.param("bias", (K,)))
    return GraphModel(g.build(_head(g, logits, K)), {"A": A, "B": B, "bias": linear.bias}, T, M, K)


def expand_hidden(model: SequenceModel, extra: int, seed: int = 0) -> SequenceModel:
    """Same function, different network: permute hidden units and add ``extra`` dead ones.

    Dead units have all-zero weights and biases, so their cell state and
    output stay exactly zero.
    """
    cfg = model.config
    M, H, K = cfg.num_features, cfg.hidden_size, cfg.num_classes
    H2 = H + extra
    perm = np.random.default_rng(seed).permutation(H)
    W, b = model.params["W"], model.params["b"]
    W2 = np.zeros((M + H2, 4 * H2))
    b2 = np.zeros(4 * H2)
    for gate in range(4):
        src = slice(gate * H, (gate + 1) * H)
        cols = gate * H2 + np.arange(H)
        W2[:M, cols] = W[:M, src][:, perm]
        W2[M + np.arange(H)[:, None], cols[None, :]] = W[M:, src][perm][:, perm]
        b2[cols] = b[src][perm]
    W_out2 = np.zeros((H2, K))
    W_out2[:H] = model.params["W_out"][perm]
    return SequenceModel(
        replace(cfg, hidden_size=H2),
        {"W": W2, "b": b2, "W_out": W_out2, "b_out": model.params["b_out"]},
        model.class_labels, model.feature_names, model.feature_mean, model.feature_std,
    )
