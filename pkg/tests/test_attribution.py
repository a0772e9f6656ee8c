"""Integrated Gradients and Shapley values against closed-form answers and the Shapley axioms."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultxai import attribution as attr
from faultxai import diffcore as dc
from faultxai import seqmodel as sm
from faultxai.errors import AttributionError, ShapeError
from faultxai.surrogates import GraphModel, LinearModel, expand_hidden, factorized_linear_model, mlp_model


def product_model():
    """f(x) = x_0 * x_1 on a single-timestep, three-channel window."""
    g = dc.GraphBuilder()
    x = g.input("x", (None, 3))
    f = g.mul(g.slice(x, 1, 0, 1), g.slice(x, 1, 1, 2))
    mask = g.input("mask", (None, 1))
    graph = g.build({"logits": f, "selected": g.sum(g.mul(mask, f))})
    return GraphModel(graph, {}, 1, 3, 1)


def random_lstm(M=4, T=6, H=5, K=3, seed=0):
    cfg = sm.ModelConfig(num_features=M, window_len=T, num_classes=K, hidden_size=H)
    rng = np.random.default_rng(seed)
    params = sm.init_parameters(cfg, rng)
    params["b_out"] = rng.normal(size=K)
    return sm.SequenceModel(cfg, params)


# -- closed forms ---------------------------------------------------------------------------


def test_linear_model_closed_form():
    model = LinearModel.from_channel_weights([1.0, 2.0, 3.0])
    x = np.ones((1, 3))
    ig = attr.integrated_gradients(model, x, None, 0, steps=1)
    sh = attr.shapley_exact(model, x, None, 0)
    np.testing.assert_allclose(ig.scores, [1, 2, 3], rtol=0, atol=1e-12)
    np.testing.assert_allclose(sh.scores, [1, 2, 3], rtol=0, atol=1e-12)
    assert ig.diagnostics["steps"] == 1


def test_linear_model_over_time_sums_weights_times_delta():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 4))
    model = LinearModel(w)
    x, b = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    ig = attr.integrated_gradients(model, x, b, 0, steps=3)
    np.testing.assert_allclose(ig.per_timestep, w * (x - b), rtol=0, atol=1e-12)
    np.testing.assert_allclose(attr.shapley_exact(model, x, b, 0).scores, (w * (x - b)).sum(axis=0), atol=1e-12)


def test_window_equal_to_baseline_gives_zeros():
    model = mlp_model(4, 3, seed=1)
    x = np.random.default_rng(1).normal(size=(4, 3))
    assert np.all(attr.integrated_gradients(model, x, x, 0).scores == 0)
    assert np.all(attr.shapley_exact(model, x, x, 0).scores == 0)
    assert np.all(attr.shapley_sampled(model, x, x, 0, 10).scores == 0)


def test_product_interaction_split_evenly():
    model = product_model()
    x = np.ones((1, 3))
    np.testing.assert_allclose(attr.integrated_gradients(model, x, None, 0, steps=8).scores, [0.5, 0.5, 0], atol=1e-12)
    np.testing.assert_allclose(attr.shapley_exact(model, x, None, 0).scores, [0.5, 0.5, 0], atol=1e-12)
    np.testing.assert_allclose(attr.shapley_sampled(model, x, None, 0, 50).scores, [0.5, 0.5, 0], atol=1e-12)


def test_shapley_weights_sum_to_one_per_player():
    from math import comb
    for M in range(1, 10):
        w = attr.shapley_weights(M)
        assert abs(sum(comb(M - 1, s) * w[s] for s in range(M)) - 1) <= 1e-12


# -- axioms (exact) -------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(M=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_exact_efficiency(M, seed):
    model = mlp_model(3, M, hidden=8, seed=seed, scale=2.0)
    rng = np.random.default_rng(seed)
    x, b = rng.normal(size=(3, M)), rng.normal(size=(3, M))
    res = attr.shapley_exact(model, x, b, 0)
    f_x, f_b = model.logits(np.stack([x, b]))[:, 0]
    assert abs(res.scores.sum() - (f_x - f_b)) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(M=st.integers(2, 10), seed=st.integers(0, 10_000), data=st.data())
def test_exact_symmetry(M, seed, data):
    i, j = data.draw(st.lists(st.integers(0, M - 1), min_size=2, max_size=2, unique=True))
    model = mlp_model(2, M, hidden=8, seed=seed, scale=2.0)
    W1 = model.params["W1"].reshape(2, M, -1)
    W1[:, j, :] = W1[:, i, :]
    rng = np.random.default_rng(seed)
    x, b = rng.normal(size=(2, M)), rng.normal(size=(2, M))
    x[:, j], b[:, j] = x[:, i], b[:, i]
    phi = attr.shapley_exact(model, x, b, 0).scores
    assert abs(phi[i] - phi[j]) <= 1e-9 * max(1.0, np.abs(phi).max())


@settings(max_examples=25, deadline=None)
@given(M=st.integers(2, 10), seed=st.integers(0, 10_000), data=st.data())
def test_exact_dummy(M, seed, data):
    dead = data.draw(st.integers(0, M - 1))
    model = mlp_model(2, M, hidden=8, seed=seed, dead_features=(dead,), scale=2.0)
    rng = np.random.default_rng(seed)
    phi = attr.shapley_exact(model, rng.normal(size=(2, M)), rng.normal(size=(2, M)), 0).scores
    assert abs(phi[dead]) <= 1e-12


def test_sampled_dummy_within_stderr():
    model = mlp_model(2, 20, hidden=8, seed=3, dead_features=(4, 11), scale=2.0)
    rng = np.random.default_rng(3)
    res = attr.shapley_sampled(model, rng.normal(size=(2, 20)), rng.normal(size=(2, 20)), 0, 100, rng_seed=1)
    se = res.diagnostics["stderr"]
    for d in (4, 11):
        assert abs(res.scores[d]) <= 3 * se[d] + 1e-12
    assert res.diagnostics["efficiency_gap"] <= 1e-9


def test_sampled_approaches_exact():
    model = mlp_model(3, 6, hidden=8, seed=5, scale=2.0)
    rng = np.random.default_rng(5)
    x, b = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
    exact = attr.shapley_exact(model, x, b, 0).scores
    approx = attr.shapley_sampled(model, x, b, 0, 1000, rng_seed=2)
    assert np.all(np.abs(approx.scores - exact) <= 4 * approx.diagnostics["stderr"] + 1e-9)


def test_exact_refuses_large_feature_counts():
    model = LinearModel(np.ones((1, 17)))
    with pytest.raises(AttributionError, match="shapley_sampled"):
        attr.shapley_exact(model, np.ones((1, 17)))
    assert attr.shapley(model, np.ones((1, 17)), num_permutations=3).method == "SHAP_sampled"
    assert attr.shapley(LinearModel(np.ones((1, 16))), np.ones((1, 16))).method == "SHAP_exact"


# -- IG behaviour ---------------------------------------------------------------------------


def test_sensitivity_single_differing_feature():
    model = random_lstm(seed=2)
    rng = np.random.default_rng(2)
    b = rng.normal(size=(6, 4))
    x = b.copy()
    x[:, 2] += 1.5
    for k in range(3):
        f = model.logits(np.stack([x, b]))[:, k]
        ig = attr.integrated_gradients(model, x, b, k, steps=128)
        sh = attr.shapley_exact(model, x, b, k)
        assert ig.scores[2] != 0 and sh.scores[2] != 0
        assert np.all(ig.scores[[0, 1, 3]] == 0) and np.all(sh.scores[[0, 1, 3]] == 0)
        assert abs(sh.scores[2] - (f[0] - f[1])) <= 1e-12


def test_ig_completeness_and_escalation():
    model = mlp_model(4, 3, hidden=16, seed=7, scale=4.0)
    rng = np.random.default_rng(7)
    x, b = rng.normal(size=(4, 3)), np.zeros((4, 3))
    one = attr.integrated_gradients(model, x, b, 0, steps=1, escalate_steps=None)
    esc = attr.integrated_gradients(model, x, b, 0, steps=1, escalate_steps=256)
    assert one.diagnostics["steps"] == 1 and one.diagnostics["completeness_gap"] > one.diagnostics["completeness_tol"]
    assert esc.diagnostics["steps"] == 256
    assert esc.diagnostics["completeness_gap"] <= esc.diagnostics["completeness_tol"]
    gaps = [attr.integrated_gradients(model, x, b, 0, steps=n, escalate_steps=None).diagnostics["completeness_gap"]
            for n in (8, 32, 128)]
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_ig_per_timestep_sums_to_scores():
    model = random_lstm(seed=4)
    x = np.random.default_rng(4).normal(size=(6, 4))
    ig = attr.integrated_gradients(model, x, None, 1)
    np.testing.assert_allclose(ig.per_timestep.sum(axis=0), ig.scores, rtol=0, atol=1e-15)


def test_default_target_is_predicted_class():
    model = random_lstm(seed=5)
    x = np.random.default_rng(5).normal(size=(6, 4))
    assert attr.integrated_gradients(model, x).target_class == model.classify(x[None])[0]
    with pytest.raises(ValueError):
        attr.integrated_gradients(model, x, target_class=7)


def test_shape_mismatch_rejected():
    model = random_lstm()
    with pytest.raises(ShapeError):
        attr.integrated_gradients(model, np.zeros((6, 5)))
    with pytest.raises(ShapeError):
        attr.shapley_exact(model, np.zeros((6, 4)), np.zeros((5, 4)))


# -- implementation invariance --------------------------------------------------------------


def test_invariance_under_refactored_linear_network():
    rng = np.random.default_rng(8)
    lin = LinearModel(rng.normal(size=(2, 4, 3)), rng.normal(size=2))
    deep = factorized_linear_model(lin, inner=5, seed=8)
    x, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(deep.logits(x), lin.logits(x), rtol=0, atol=1e-12)
    for k in range(2):
        np.testing.assert_allclose(attr.integrated_gradients(deep, x, b, k).scores,
                                   attr.integrated_gradients(lin, x, b, k).scores, rtol=0, atol=1e-9)
        np.testing.assert_allclose(attr.shapley_exact(deep, x, b, k).scores,
                                   attr.shapley_exact(lin, x, b, k).scores, rtol=0, atol=1e-9)


def test_invariance_under_hidden_unit_relabeling():
    model = random_lstm(seed=9)
    wide = expand_hidden(model, extra=3, seed=9)
    rng = np.random.default_rng(9)
    x, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    np.testing.assert_allclose(wide.logits(x), model.logits(x), rtol=0, atol=1e-12)
    for k in range(3):
        np.testing.assert_allclose(attr.integrated_gradients(wide, x, b, k).scores,
                                   attr.integrated_gradients(model, x, b, k).scores, rtol=0, atol=1e-9)
        np.testing.assert_allclose(attr.shapley_exact(wide, x, b, k).scores,
                                   attr.shapley_exact(model, x, b, k).scores, rtol=0, atol=1e-9)


def test_sampled_is_deterministic_per_seed():
    model = mlp_model(2, 20, seed=1)
    rng = np.random.default_rng(1)
    x, b = rng.normal(size=(2, 20)), rng.normal(size=(2, 20))
    a = attr.shapley_sampled(model, x, b, 0, 20, rng_seed=4)
    again = attr.shapley_sampled(model, x, b, 0, 20, rng_seed=4)
    other = attr.shapley_sampled(model, x, b, 0, 20, rng_seed=5)
    assert a.scores.tobytes() == again.scores.tobytes()
    assert a.scores.tobytes() != other.scores.tobytes()


# -- baselines and CSV ----------------------------------------------------------------------


class _Holder:
    window_len, num_features = 3, 2
    X = np.arange(24, dtype=float).reshape(4, 3, 2)
    y = np.array([0, 1, 0, 1])


def test_baselines():
    h = _Holder()
    assert np.all(attr.make_baseline(h, "zeros").values == 0)
    nm = attr.make_baseline(h, "normal_mean")
    np.testing.assert_allclose(nm.values, np.tile(h.X[[0, 2]].mean(axis=(0, 1)), (3, 1)))
    assert nm.provenance == "normal_mean"
    assert attr.make_baseline(h, "custom", np.ones((3, 2))).provenance == "custom"
    with pytest.raises(ShapeError):
        attr.make_baseline(h, "custom", np.ones((2, 2)))
    with pytest.raises(ValueError):
        attr.make_baseline(h, "median")
    h2 = _Holder()
    h2.y = np.array([1, 1, 1, 1])
    with pytest.raises(AttributionError):
        attr.make_baseline(h2, "normal_mean")


def test_csv_round_trip():
    model = mlp_model(2, 20, seed=1)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 20))
    for amap in (attr.integrated_gradients(model, x, None, 0), attr.shapley_sampled(model, x, None, 0, 5)):
        amap.fault_class, amap.window_offset = "IDV4", 30
        back = attr.attribution_from_csv(amap.to_csv())
        assert back.scores.tobytes() == amap.scores.tobytes()
        assert (back.method, back.target_class, back.fault_class, back.window_offset) == (
            amap.method, amap.target_class, "IDV4", 30)
        assert back.feature_names == amap.feature_names
        if "stderr" in amap.diagnostics:
            assert back.diagnostics["stderr"].tobytes() == amap.diagnostics["stderr"].tobytes()
