import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmkg import autodiff as ad
from mmkg.autodiff import ParameterSet, finite_diff_check, forward_backward, no_grad
from mmkg.errors import NumericError, ShapeError


def _params(**values):
    p = ParameterSet(np.float64)
    for k, v in values.items():
        p.add(k, v)
    return p


# worked examples

def test_grad_of_sum_is_ones():
    p = _params(p=[0.3, -1.0, 2.0])
    loss = forward_backward(lambda q: q["p"].sum(), p)
    assert loss == pytest.approx(1.3)
    np.testing.assert_array_equal(p["p"].grad, [1.0, 1.0, 1.0])


def test_grad_of_sum_of_squares():
    p = _params(p=[1.0, 2.0, 3.0])
    forward_backward(lambda q: (q["p"] * q["p"]).sum(), p)
    np.testing.assert_allclose(p["p"].grad, [2.0, 4.0, 6.0])


def test_grad_of_neg_log_sigmoid_at_zero_weights():
    x = np.array([0.7, -1.5])
    p = _params(w=[0.0, 0.0])
    loss = forward_backward(lambda q: -ad.log_sigmoid((q["w"] * x).sum()), p)
    assert loss == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(p["w"].grad, -x / 2)


def test_unused_parameter_gets_exact_zero():
    p = _params(a=[1.0, 2.0], b=[[3.0]])
    forward_backward(lambda q: (q["a"] * q["a"]).sum(), p)
    assert np.all(p["b"].grad == 0.0)


def test_non_finite_loss_names_primitive():
    p = _params(a=[0.0, 1.0])
    with pytest.raises(NumericError, match="log"):
        forward_backward(lambda q: ad.log(q["a"] * 0.0).sum(), p)


def test_loss_must_be_scalar():
    p = _params(a=[1.0, 2.0])
    with pytest.raises(ShapeError):
        forward_backward(lambda q: q["a"] * 2.0, p)


def test_finite_diff_linear_is_exact():
    p = _params(a=np.linspace(-1, 1, 6).reshape(2, 3))
    c = np.arange(6.0).reshape(2, 3)
    assert finite_diff_check(lambda q: (q["a"] * c).sum(), p) <= 1e-6


def test_finite_diff_detects_wrong_gradient():
    # a primitive with a deliberately broken backward
    def bad_square(a):
        return ad._result(a.value ** 2, "bad", (a,), lambda g: (g * a.value,))

    p = _params(a=[0.5, 1.5])
    assert finite_diff_check(lambda q: bad_square(q["a"]).sum(), p) > 0.1


def test_finite_diff_distmult_five_dim():
    rng = np.random.default_rng(3)
    p = _params(h=rng.normal(size=5), r=rng.normal(size=5), t=rng.normal(size=5))
    err = finite_diff_check(lambda q: (q["h"] * q["r"] * q["t"]).sum(), p)
    assert err < 1e-4


def test_finite_diff_steps_around_relu_kink():
    # x sits 1e-5 from the kink, well inside the default step
    p = _params(x=[1e-5, -2e-5, 0.3])
    err = finite_diff_check(lambda q: (ad.relu(q["x"]) * np.array([2.0, 3.0, 1.0])).sum(), p)
    assert err < 1e-6


def test_finite_diff_does_not_touch_caller_params():
    p = ParameterSet()
    p.add("a", [1.0, 2.0])
    before = p["a"].value.copy()
    finite_diff_check(lambda q: (q["a"] * q["a"]).sum(), p)
    np.testing.assert_array_equal(p["a"].value, before)
    assert p["a"].dtype == np.float32


# primitives against finite differences

def _check(fn, **values):
    return finite_diff_check(fn, _params(**values), eps=1e-5)


RNG = np.random.default_rng(0)


@pytest.mark.parametrize("name,fn,values", [
    ("exp", lambda q: ad.exp(q["a"]).sum(), {"a": RNG.normal(size=4)}),
    ("log", lambda q: ad.log(q["a"]).sum(), {"a": RNG.uniform(0.5, 2, size=4)}),
    ("sqrt", lambda q: ad.sqrt(q["a"]).sum(), {"a": RNG.uniform(0.5, 2, size=4)}),
    ("sigmoid", lambda q: (ad.sigmoid(q["a"]) * np.arange(4)).sum(), {"a": RNG.normal(size=4)}),
    ("log_sigmoid", lambda q: ad.log_sigmoid(q["a"]).sum(), {"a": RNG.normal(size=4) * 5}),
    ("leaky_relu", lambda q: (ad.leaky_relu(q["a"]) * np.arange(1, 5)).sum(), {"a": np.array([-1.0, 0.4, -0.2, 2.0])}),
    ("matmul", lambda q: ((q["a"] @ q["b"]) * np.arange(6).reshape(2, 3)).sum(),
     {"a": RNG.normal(size=(2, 4)), "b": RNG.normal(size=(4, 3))}),
    ("matmul_batched", lambda q: (q["a"] @ q["b"]).sum(),
     {"a": RNG.normal(size=(3, 2, 4)), "b": RNG.normal(size=(4, 2))}),
    ("einsum", lambda q: (ad.einsum("bi,bj->ij", q["a"], q["b"]) * np.arange(6).reshape(2, 3)).sum(),
     {"a": RNG.normal(size=(4, 2)), "b": RNG.normal(size=(4, 3))}),
    ("concat", lambda q: (ad.concat([q["a"], q["b"]], axis=1) * np.arange(10).reshape(2, 5)).sum(),
     {"a": RNG.normal(size=(2, 2)), "b": RNG.normal(size=(2, 3))}),
    ("index_repeated", lambda q: (q["a"][np.array([0, 2, 0, 1])] * np.arange(12).reshape(4, 3)).sum(),
     {"a": RNG.normal(size=(3, 3))}),
    ("softmax", lambda q: (ad.softmax(q["a"], axis=-1) * np.arange(8).reshape(2, 4)).sum(),
     {"a": RNG.normal(size=(2, 4))}),
    ("mean_axis", lambda q: (q["a"].mean(axis=0) * np.arange(3)).sum(), {"a": RNG.normal(size=(4, 3))}),
    ("broadcast_mul", lambda q: (q["a"] * q["b"]).sum(), {"a": RNG.normal(size=(4, 3)), "b": RNG.normal(size=(3,))}),
    ("transpose", lambda q: (q["a"].T * np.arange(6).reshape(3, 2)).sum(), {"a": RNG.normal(size=(2, 3))}),
    ("segment_sum", lambda q: (ad.segment_sum(q["a"], np.array([0, 2, 2, 0]), 3) * np.arange(6).reshape(3, 2)).sum(),
     {"a": RNG.normal(size=(4, 2))}),
    ("segment_softmax", lambda q: (ad.segment_softmax(q["a"], np.array([1, 1, 0, 1, 0]), 3) * np.arange(5)).sum(),
     {"a": RNG.normal(size=5)}),
])
def test_primitive_gradients(name, fn, values):
    assert _check(fn, **values) < 1e-6, name


def test_spmm_gradient():
    adj = sp.csr_matrix(np.array([[0, 0.5, 0.5], [1, 0, 0], [0, 0, 0]]))
    assert _check(lambda q: (ad.spmm(adj, q["a"]) * np.arange(6).reshape(3, 2)).sum(),
                  a=RNG.normal(size=(3, 2))) < 1e-6


def test_segment_softmax_empty_segment_is_ignored():
    out = ad.segment_softmax(np.array([0.0, np.log(3.0)]), np.array([2, 2]), 4)
    np.testing.assert_allclose(out.value, [0.25, 0.75])


def test_sqrt_at_zero_has_finite_gradient():
    p = _params(a=[0.0, 4.0])
    forward_backward(lambda q: ad.sqrt(q["a"]).sum(), p)
    assert np.all(np.isfinite(p["a"].grad))


def test_no_grad_records_nothing():
    p = _params(a=[1.0])
    with no_grad():
        out = (p["a"] * 3.0).sum()
    assert out.parents == () and out.backward_fn is None


def test_dropout_eval_is_identity_and_train_is_inverted():
    x = np.ones((200, 50))
    assert ad.dropout(x, 0.5, None, train=False).value is not None
    np.testing.assert_array_equal(ad.dropout(x, 0.5, None, train=False).value, x)
    y = ad.dropout(x, 0.5, np.random.default_rng(0), train=True).value
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05
    with pytest.raises(ValueError):
        ad.dropout(x, 0.5, None, train=True)


def test_parameter_set_state_roundtrip_and_mismatch():
    p = _params(a=[1.0, 2.0], b=np.zeros((2, 2)))
    s = p.state()
    p["a"].value[:] = 9
    p.load_state(s)
    np.testing.assert_array_equal(p["a"].value, [1.0, 2.0])
    with pytest.raises(KeyError):
        p.load_state({"a": s["a"]})
    with pytest.raises(ShapeError):
        p.load_state({"a": np.zeros(3), "b": s["b"]})


def test_f32_storage_f64_reductions():
    t = ad.Tensor(np.full(10_000_000 // 100, 0.1, dtype=np.float32))
    assert t.dtype == np.float32
    assert t.sum().value == pytest.approx(10_000.0, rel=1e-6)


# properties

finite = st.floats(-3, 3, allow_nan=False, width=64)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4, 2), elements=finite))
def test_matmul_gradient_matches_closed_form(a, b):
    p = _params(a=a, b=b)
    forward_backward(lambda q: (q["a"] @ q["b"]).sum(), p)
    np.testing.assert_allclose(p["a"].grad, np.ones((3, 2)) @ b.T, atol=1e-12)
    np.testing.assert_allclose(p["b"].grad, a.T @ np.ones((3, 2)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-50, 50, allow_nan=False)))
def test_sigmoid_and_log_sigmoid_consistent(x):
    s = ad.sigmoid(x).value
    assert np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(ad.log_sigmoid(x).value, np.log(np.maximum(s, 1e-300)), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 7, elements=finite), st.lists(st.integers(0, 3), min_size=7, max_size=7))
def test_segment_softmax_rows_sum_to_one(x, segs):
    segs = np.array(segs)
    w = ad.segment_softmax(x, segs, 4).value
    for s in np.unique(segs):
        assert abs(w[segs == s].sum() - 1.0) < 1e-12
    assert np.all(w > 0)
