import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmkg.autodiff import ParameterSet, finite_diff_check
from mmkg.errors import ShapeError
from mmkg.features import FeatureStore
from mmkg.gating import (edge_gate, edge_gate_combine, gate_edges, gate_nodes, init_gate_params, node_gate,
                         node_gate_combine)


def _gates(side="node", features="text", width=2, feat_dim=2, seed=0, per_dim=False, dtype=np.float64):
    p = ParameterSet(dtype)
    init_gate_params(p, side, features, width, {"text": feat_dim, "image": feat_dim + 1},
                     np.random.default_rng(seed), per_dim)
    return p


def _set(p, name, value):
    p[name].value = np.asarray(value, dtype=p.dtype).reshape(p[name].shape)


# node gate

def test_fresh_gate_is_midpoint():
    p = _gates()
    _set(p, "gate.node.text.proj", np.eye(2))
    out, s, _ = node_gate([[0.0, 0.0]], [[2.0, 4.0]], "text", p, return_gate=True)
    np.testing.assert_array_equal(s.value, [[0.5]])
    np.testing.assert_array_equal(out.value, [[1.0, 2.0]])


def test_gate_closed_and_open():
    p = _gates()
    _set(p, "gate.node.text.proj", np.eye(2))
    v, f = np.array([[0.3, -0.7]]), np.array([[2.0, 4.0]])
    _set(p, "gate.node.text.b2", [-60.0])
    np.testing.assert_allclose(node_gate(v, f, "text", p).value, v, atol=1e-20)
    _set(p, "gate.node.text.b2", [60.0])
    np.testing.assert_allclose(node_gate(v, f, "text", p).value, f, atol=1e-20)


def test_projected_feature_equal_to_embedding_returns_embedding():
    p = _gates(seed=3)
    _set(p, "gate.node.text.w2", np.random.default_rng(1).normal(size=2))
    _set(p, "gate.node.text.proj", np.eye(2))
    v = np.array([[0.25, -1.5], [2.0, 0.5]])
    np.testing.assert_array_equal(node_gate(v, v, "text", p).value, v)


def test_projection_width_mismatch():
    p = _gates(width=3)
    with pytest.raises(ShapeError):
        node_gate(np.zeros((1, 2)), np.zeros((1, 2)), "text", p)


@pytest.mark.parametrize("combine,side", [(node_gate_combine, "node"), (edge_gate_combine, "edge")])
def test_combine_selectors(combine, side):
    p = _gates(side=side, features="both")
    vt, vm = np.array([[2.0, 0.0]]), np.array([[0.0, 2.0]])
    eye, zero = np.eye(2), np.zeros((2, 2))
    _set(p, f"gate.{side}.both", np.vstack([eye, zero]))
    np.testing.assert_array_equal(combine(vt, vm, p).value, vt)
    _set(p, f"gate.{side}.both", np.vstack([zero, eye]))
    np.testing.assert_array_equal(combine(vt, vm, p).value, vm)
    _set(p, f"gate.{side}.both", np.vstack([0.5 * eye, 0.5 * eye]))
    np.testing.assert_array_equal(combine(vt, vm, p).value, [[1.0, 1.0]])


# edge gate

def test_edge_gate_equal_endpoints_project_once():
    p = _gates(side="edge", feat_dim=3, seed=2)
    f = np.array([[1.0, -2.0, 0.5]])
    _, _, pair = edge_gate(np.zeros((1, 2)), f, f, "text", p, return_gate=True)
    np.testing.assert_allclose(pair.value, f @ p["gate.edge.text.proj"].value, atol=1e-15)


def test_edge_gate_midpoint_and_closed():
    p = _gates(side="edge")
    _set(p, "gate.edge.text.proj", np.eye(2))
    out = edge_gate([[0.0, 0.0]], [[1.0, 1.0]], [[1.0, 1.0]], "text", p)
    np.testing.assert_array_equal(out.value, [[0.5, 0.5]])
    _set(p, "gate.edge.text.b2", [-60.0])
    e = np.array([[0.4, -0.1]])
    np.testing.assert_allclose(edge_gate(e, [[3.0, 1.0]], [[1.0, -5.0]], "text", p).value, e, atol=1e-20)


# invariants

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.booleans(), st.sampled_from(["node", "edge"]))
def test_gated_output_lies_between_inputs(seed, per_dim, side):
    rng = np.random.default_rng(seed)
    p = _gates(side=side, width=4, feat_dim=3, seed=seed, per_dim=per_dim)
    for name in p.names():
        p[name].value = rng.normal(scale=2.0, size=p[name].shape)
    base = rng.normal(size=(5, 4))
    if side == "node":
        out, s, cand = node_gate(base, rng.normal(size=(5, 3)), "text", p, return_gate=True)
    else:
        out, s, cand = edge_gate(base, rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), "text", p, return_gate=True)
    lo, hi = np.minimum(base, cand.value), np.maximum(base, cand.value)
    assert np.all((s.value >= 0) & (s.value <= 1))
    assert np.all(out.value >= lo) and np.all(out.value <= hi)


def test_gate_parameter_shapes():
    p = _gates(features="both", width=3, feat_dim=5)
    assert p["gate.node.text.proj"].shape == (5, 3) and p["gate.node.image.proj"].shape == (6, 3)
    assert p["gate.node.text.w1"].shape == (6, 3) and p["gate.node.text.w2"].shape == (3, 1)
    assert p["gate.node.both"].shape == (6, 3)
    assert np.all(p["gate.node.text.w2"].value == 0) and np.all(p["gate.node.text.b2"].value == 0)
    assert _gates(width=3, per_dim=True)["gate.node.text.w2"].shape == (3, 3)


# configuration paths

def test_feature_config_selects_path():
    rng = np.random.default_rng(0)
    feats = FeatureStore(text=rng.normal(size=(4, 2)), image=rng.normal(size=(4, 3)))
    p = _gates(features="both", width=2)
    v = rng.normal(size=(4, 2))
    np.testing.assert_array_equal(gate_nodes(v, feats, "none", p).value, v)
    np.testing.assert_array_equal(gate_nodes(v, feats, "text", p).value, node_gate(v, feats.text, "text", p).value)
    np.testing.assert_array_equal(gate_nodes(v, feats, "image", p).value, node_gate(v, feats.image, "image", p).value)
    both = node_gate_combine(node_gate(v, feats.text, "text", p), node_gate(v, feats.image, "image", p), p)
    np.testing.assert_array_equal(gate_nodes(v, feats, "both", p).value, both.value)
    pe = _gates(side="edge", features="both", width=2)
    heads, tails = np.array([0, 1, 3]), np.array([2, 2, 0])
    e = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(gate_edges(e, heads, tails, feats, "none", pe).value, e)
    ref = edge_gate(e, feats.image[heads], feats.image[tails], "image", pe)
    np.testing.assert_array_equal(gate_edges(e, heads, tails, feats, "image", pe).value, ref.value)


# gradients

@pytest.mark.parametrize("side,features", [("node", "text"), ("node", "image"), ("node", "both"),
                                           ("edge", "text"), ("edge", "both")])
@pytest.mark.parametrize("seed", range(3))
def test_gate_gradients(side, features, seed):
    rng = np.random.default_rng(seed)
    p = _gates(side=side, features=features, width=3, feat_dim=4, seed=seed)
    for name in p.names():
        if name.endswith((".w2", ".b2")):
            p[name].value = rng.normal(size=p[name].shape)
    p.add("base", rng.normal(size=(5, 3)))
    p.add("text", rng.normal(size=(5, 4)))
    p.add("image", rng.normal(size=(5, 5)))
    weights = rng.normal(size=(5, 3))

    def loss(q):
        if side == "node":
            outs = {m: node_gate(q["base"], q[m], m, q) for m in ("text", "image") if f"gate.node.{m}.proj" in q}
            out = node_gate_combine(outs["text"], outs["image"], q) if features == "both" else outs[features]
        else:
            outs = {m: edge_gate(q["base"], q[m], q[m][np.array([4, 3, 2, 1, 0])], m, q)
                    for m in ("text", "image") if f"gate.edge.{m}.proj" in q}
            out = edge_gate_combine(outs["text"], outs["image"], q) if features == "both" else outs[features]
        return (out * weights).sum()

    assert finite_diff_check(loss, p, eps=1e-4) < 1e-4
