import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmkg.autodiff import ParameterSet, forward_backward
from mmkg.optim import OptimizerState, optimizer_step


def _one(value, grad, dtype=np.float64):
    p = ParameterSet(dtype)
    t = p.add("w", value)
    t.grad = np.asarray(grad, dtype=dtype)
    return p


def test_zero_gradient_no_decay_is_noop():
    for algo in ("adam", "sgd"):
        p = _one([0.3, -1.2], [0.0, 0.0])
        optimizer_step(OptimizerState(algo, lr=0.1), p)
        np.testing.assert_array_equal(p["w"].value, [0.3, -1.2])


def test_sgd_single_step():
    p = _one([0.0, 0.0], [1.0, -2.0])
    optimizer_step(OptimizerState("sgd", lr=0.1), p)
    np.testing.assert_allclose(p["w"].value, [-0.1, 0.2])


def test_decay_only_step():
    p = _one([1.0], [0.0])
    optimizer_step(OptimizerState("adam", lr=0.001, weight_decay=0.005), p)
    assert p["w"].value[0] == pytest.approx(0.999995, abs=1e-12)


def test_gradients_zeroed_after_step():
    p = _one([1.0, 2.0], [0.5, 0.5])
    optimizer_step(OptimizerState(), p)
    assert np.all(p["w"].grad == 0)


def test_step_counter_increases():
    p = _one([1.0], [1.0])
    st_ = OptimizerState()
    for i in range(1, 4):
        p["w"].grad[:] = 1.0
        optimizer_step(st_, p)
        assert st_.step == i
    assert st_.m["w"].shape == p["w"].shape


def _reference_adam(x, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    # scalar textbook Adam with decoupled decay, written independently of the package
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        x = x * (1 - lr * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def test_adam_matches_reference_trajectory():
    grads = [0.5, -0.25, 1.5, 0.0, -2.0]
    p = _one([0.7], [0.0])
    state = OptimizerState("adam", lr=0.01, weight_decay=0.1)
    for g in grads:
        p["w"].grad[:] = g
        optimizer_step(state, p)
    assert p["w"].value[0] == pytest.approx(_reference_adam(0.7, grads, 0.01, 0.1), abs=1e-12)


def test_first_adam_step_has_magnitude_lr():
    p = _one([0.0, 0.0], [3.0, -1e-3])
    optimizer_step(OptimizerState("adam", lr=0.01), p)
    np.testing.assert_allclose(p["w"].value, [-0.01, 0.01], rtol=1e-4)


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from(["adam", "sgd"]), st.floats(0, 0.1))
def test_lr_zero_leaves_parameters_unchanged(x, g, algo, wd):
    p = _one([x], [g])
    optimizer_step(OptimizerState(algo, lr=0.0, weight_decay=wd), p)
    assert p["w"].value[0] == x


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4), st.sampled_from(["adam", "sgd"]))
def test_small_step_descends_quadratic(x0, algo):
    p = ParameterSet(np.float64)
    p.add("w", [x0])
    before = forward_backward(lambda q: (q["w"] * q["w"]).sum(), p)
    optimizer_step(OptimizerState(algo, lr=1e-3), p)
    after = float((p["w"].value ** 2).sum())
    assert after < before
