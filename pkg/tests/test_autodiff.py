import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nodecal import autodiff as ad
from nodecal.autodiff import Value, backward
from oracles import central_diff, rel_err


def grad_of(f, x):
    v = Value(x, requires_grad=True)
    backward(f(v))
    return v.grad


def check(f, x, tol=1e-5):
    analytic = grad_of(f, x)
    numeric = central_diff(lambda a: float(np.asarray(f(a))), x)
    assert rel_err(analytic, numeric) < tol


def test_square_example():
    x = Value(3.0, requires_grad=True)
    backward(x * x)
    assert float(x.grad) == 6.0


def test_sum_of_matrix_entries_gives_ones():
    x = Value(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_relu_subgradient_at_zero():
    x = Value(0.0, requires_grad=True)
    backward(ad.relu(x))
    assert float(x.grad) == 0.0


def test_abs_subgradient_at_zero():
    x = Value(np.array([0.0, -2.0, 3.0]), requires_grad=True)
    backward(ad.sum_(ad.abs_(x)))
    np.testing.assert_array_equal(x.grad, [0.0, -1.0, 1.0])


def test_non_scalar_root_rejected():
    x = Value(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shape mismatch"):
        Value(np.ones(3)) + Value(np.ones(4))
    with pytest.raises(ValueError, match="shape mismatch"):
        Value(np.ones((2, 3))) @ Value(np.ones(2))


def test_exponent_gradient_needs_positive_base():
    b = Value(2.0, requires_grad=True)
    with pytest.raises(ValueError, match="positive base"):
        backward(ad.sum_(ad.power(np.array([-1.0, 2.0]), b)))


def test_shared_subexpression_accumulates():
    x = Value(1.5, requires_grad=True)
    y = x * x
    backward(y * y + y)  # x^4 + x^2
    assert float(x.grad) == pytest.approx(4 * 1.5**3 + 2 * 1.5)


def test_grads_accumulate_across_passes_until_zeroed():
    x = Value(2.0, requires_grad=True)
    backward(x * 3.0)
    backward(x * 3.0)
    assert float(x.grad) == 6.0
    ad.zero_grads([x])
    backward(x * 3.0)
    assert float(x.grad) == 3.0


def test_numpy_fallthrough():
    assert isinstance(ad.exp(np.array([0.0, 1.0])), np.ndarray)
    assert ad.sigmoid(0.0) == 0.5


def test_sigmoid_extremes_are_finite():
    out = ad.sigmoid(np.array([-1000.0, 1000.0]))
    np.testing.assert_allclose(out, [0.0, 1.0])


def test_tape_order_is_topological():
    x = Value(1.0, requires_grad=True)
    y = ad.exp(x) * x
    tape = ad.Tape(y)
    pos = {id(n): k for k, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for p, _ in n._parents:
            assert pos[id(p)] < pos[id(n)]


rng = np.random.default_rng(7)
POS = rng.uniform(0.5, 2.0, size=(3, 4))
VEC = rng.normal(size=4)


@pytest.mark.parametrize(
    "f",
    [
        lambda x: ad.sum_(x + x * 2.0),
        lambda x: ad.sum_(x - 1.0 / x),
        lambda x: ad.sum_(x * x / (x + 1.0)),
        lambda x: ad.sum_(-x) + ad.mean(x),
        lambda x: ad.sum_(ad.power(x, 1.7)),
        lambda x: ad.sum_(ad.power(1.3, x)),
        lambda x: ad.sum_(x**2.5 + 2.0**x),
        lambda x: ad.sum_(ad.exp(x) + ad.log(x)),
        lambda x: ad.sum_(ad.sigmoid(x) * ad.tanh(x)),
        lambda x: ad.sum_(ad.relu(x - 1.0) + ad.abs_(x - 1.1)),
        lambda x: ad.sum_(ad.hardtanh(x, 0.8, 1.6)),
        lambda x: ad.sum_(ad.clamp_min(x, 1.0)),
        lambda x: ad.sum_((x @ VEC) * (x @ VEC)),
        lambda x: ad.sum_(VEC @ x.T),
        lambda x: ad.sum_(x.T @ x),
        lambda x: ad.sum_(x[1] * x[2, 3]),
        lambda x: ad.sum_(ad.stack([x[0, 0], x[1, 1], x[2, 2]]) ** 2.0),
    ],
)
def test_op_gradients_match_finite_differences(f):
    check(f, POS)


def test_learnable_exponent_gradient():
    base = np.array([0.3, 0.9, 1.7])
    check(lambda b: ad.sum_(ad.power(base, b)), 1.4)


def test_vector_dot_product_gradient():
    check(lambda v: v @ VEC, rng.normal(size=4))


finite = st.floats(min_value=-3, max_value=3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 5, elements=finite))
def test_smooth_composition_matches_fd(x):
    f = lambda v: ad.sum_(ad.tanh(v) * ad.sigmoid(v * 0.5) + ad.exp(v * 0.3))
    check(f, x, tol=1e-5)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, 3, elements=finite))
def test_matvec_gradient_is_outer_product(A, x):
    W = Value(A, requires_grad=True)
    backward(ad.sum_(W @ x))
    np.testing.assert_allclose(W.grad, np.outer(np.ones(2), x))
