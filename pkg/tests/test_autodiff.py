import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaopt import autodiff as ad
from metaopt.errors import DisconnectedParameter, NonFiniteGradient, NonFiniteLoss
from metaopt.linalg import abs2, cmatmul, split

from conftest import crandn, rel_err


def test_sum_of_squares_gradient():
    loss, g = ad.value_and_grad(lambda x: ad.sum_(ad.square(x)), np.array([1.0, 2.0, 3.0]))
    assert loss == 14.0
    np.testing.assert_array_equal(g, [2.0, 4.0, 6.0])


def test_min_tie_routes_to_first_index():
    _, g = ad.value_and_grad(lambda x: ad.min_(x), np.array([1.5, 1.5]))
    np.testing.assert_array_equal(g, [1.0, 0.0])


def test_min_along_axis_routes_to_argmin():
    x = np.array([[3.0, 1.0, 1.0], [0.5, 2.0, 0.5]])
    _, g = ad.value_and_grad(lambda t: ad.sum_(ad.min_(t, axis=1)), x)
    np.testing.assert_array_equal(g, [[0, 1, 0], [1, 0, 0]])


def test_log2_rate_matches_finite_differences(rng):
    h = crandn(rng, 4)

    def loss(x):
        p = (x[:4], x[4:])
        hr, hi = split(h.conj()[None, :])
        re, im = cmatmul((hr, hi), (ad.reshape(p[0], (4, 1)), ad.reshape(p[1], (4, 1))))
        return ad.sum_(ad.log(1.0 + re * re + im * im)) / np.log(2)

    x = rng.standard_normal(8)
    _, g = ad.value_and_grad(loss, x)
    assert rel_err(g, ad.finite_diff_grad(loss, x)) <= 1e-6


def test_finite_diff_analytic_and_constant():
    g = ad.finite_diff_grad(lambda x: ad.sum_(ad.square(x)), np.array([3.0]), step=1e-4)
    assert abs(g[0] - 6.0) <= 1e-7
    np.testing.assert_array_equal(ad.finite_diff_grad(lambda x: 5.0, np.ones(3)), np.zeros(3))


def test_finite_diff_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ad.finite_diff_grad(lambda x: 0.0, np.ones(2), step=0.0)
    with pytest.raises(NonFiniteLoss):
        ad.finite_diff_grad(lambda x: np.inf * x[0], np.zeros(1) + 1.0)


def test_abs2_at_zero_has_zero_gradient():
    _, g = ad.value_and_grad(lambda x: ad.sum_(abs2((x[:2], x[2:]))), np.zeros(4))
    np.testing.assert_array_equal(g, np.zeros(4))


def test_disconnected_parameter_warns_and_returns_zeros():
    tape = ad.Tape()
    a, b = tape.param(np.ones(2)), tape.param(np.ones(3))
    loss = ad.sum_(a * 2.0)
    with pytest.warns(DisconnectedParameter):
        ga, gb = ad.grad(loss, [a, b])
    np.testing.assert_array_equal(ga, [2.0, 2.0])
    np.testing.assert_array_equal(gb, np.zeros(3))


def test_non_finite_gradient_raises():
    tape = ad.Tape()
    x = tape.param(np.zeros(1))
    with pytest.raises(NonFiniteGradient), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ad.grad(ad.sum_(ad.sqrt(x)), [x])


def test_tape_is_topologically_ordered():
    tape = ad.Tape()
    x = tape.param(np.arange(3.0))
    ad.sum_(ad.tanh(x * x) @ np.ones(3) + ad.exp(x)[0])
    for node in tape.nodes:
        assert all(parent.index < node.index for parent, _ in node.links)


def test_ops_without_tensors_return_plain_arrays():
    out = ad.sum_(ad.log(ad.exp(np.ones(3))))
    assert not isinstance(out, ad.Tensor)
    assert out == pytest.approx(3.0)


def test_mixed_tapes_rejected():
    a, b = ad.Tape().param(np.ones(2)), ad.Tape().param(np.ones(2))
    with pytest.raises(ValueError):
        a + b


def _composite(x, A, b):
    h = ad.tanh(ad.reshape(x, (3, 2)) @ A) + b
    s = ad.sigmoid(ad.concat([ad.sum_(h, axis=0), ad.getitem(x, np.array([0, 0, 5]))]))
    z = ad.stack([ad.mean(s), ad.min_(s) * 2.0, ad.sqrt(ad.sum_(ad.square(s)) + 1.0)])
    return ad.sum_(ad.log(1.0 + ad.exp(z)) / ad.cos(0.1 * z)) + ad.sum_(ad.sin(ad.transpose(h)) / (2.0 + s[0]))


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1))
def test_composite_gradient_matches_finite_differences(seed):
    r = np.random.default_rng(seed)
    A, b, x = r.standard_normal((2, 4)), r.standard_normal(4), r.standard_normal(6)
    # keep away from min ties and from the |.|-like kinks
    loss = lambda t: _composite(t, A, b)
    _, g = ad.value_and_grad(loss, x)
    assert rel_err(g, ad.finite_diff_grad(loss, x, 1e-5)) <= 1e-4


@given(st.integers(0, 2**31 - 1))
def test_matmul_broadcast_gradients(seed):
    r = np.random.default_rng(seed)
    B = r.standard_normal((3, 2, 4))
    v = r.standard_normal(2)

    def loss(x):
        M = ad.reshape(x[:8], (4, 2))
        y = ad.reshape(x[8:], (2,))
        return ad.sum_(ad.square(B @ M)) + ad.sum_((B @ M) @ y) + ad.sum_(y @ ad.transpose(M)) + ad.sum_(v * y)

    x = r.standard_normal(10)
    _, g = ad.value_and_grad(loss, x)
    assert rel_err(g, ad.finite_diff_grad(loss, x)) <= 1e-5
