import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bilingual_gan import autodiff as ad
from bilingual_gan.autodiff import SecondOrderError, ShapeError, Tensor
from bilingual_gan.gradcheck import PENALTY_TOLERANCE, TOLERANCE, penalty_case, run_suite


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


# forward values --------------------------------------------------------------


def test_matmul_hand_value():
    out = ad.matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]])
    np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])


def test_softmax_symmetric():
    np.testing.assert_allclose(ad.softmax([0.0, 0.0, 0.0]).data, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_conv1d_zero_signal_is_zero():
    rng = np.random.default_rng(0)
    out = ad.conv1d(np.zeros((2, 7, 3)), rng.normal(size=(5, 3, 4)), np.zeros(4))
    assert out.shape == (2, 7, 4)
    assert not out.data.any()


def test_conv1d_same_padding_against_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 2))
    k = rng.normal(size=(3, 2, 4))
    b = rng.normal(size=4)
    want = np.zeros((6, 4))
    for t in range(6):
        for j in range(3):
            s = t + j - 1
            if 0 <= s < 6:
                want[t] += x[s] @ k[j]
    want += b
    np.testing.assert_allclose(ad.conv1d(x, k, b).data, want, atol=1e-12)


def test_conv1d_rejects_even_kernel():
    with pytest.raises(ValueError):
        ad.conv1d(np.zeros((4, 2)), np.zeros((2, 2, 2)))


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as info:
        ad.matmul(np.zeros((2, 3)), np.zeros((4, 5)))
    msg = str(info.value)
    assert "matmul" in msg and "(2, 3)" in msg and "(4, 5)" in msg


def test_cross_entropy_uniform_logits():
    V = 8005
    loss = ad.cross_entropy(np.zeros((3, V)), np.array([0, 5, 8004]))
    assert loss.item() == pytest.approx(math.log(V), rel=1e-12)
    assert math.log(V) == pytest.approx(8.988, abs=1e-3)


# first-order gradients -------------------------------------------------------


def test_backward_square():
    x = leaf(3.0)
    grads = ad.backward(x * x)
    assert grads[x] == pytest.approx(6.0)


def test_backward_mean_tanh_at_zero():
    x = leaf(np.zeros(4))
    ad.backward(ad.tanh(x).mean())
    np.testing.assert_allclose(x.grad, [0.25] * 4)


def test_backward_rejects_non_scalar():
    x = leaf(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(x * 2.0)


def test_unreachable_leaf_gets_zero():
    x, y = leaf(np.ones(3)), leaf(np.ones((2, 2)))
    grads = ad.backward((x * x).sum(), params=[y])
    np.testing.assert_array_equal(grads[y], np.zeros((2, 2)))


def test_shared_leaf_accumulates():
    x = leaf([1.0, -2.0])
    ad.backward((x * 3.0 + ad.tanh(x)).sum())
    np.testing.assert_allclose(x.grad, 3.0 + 1 - np.tanh([1.0, -2.0]) ** 2)


def test_mlp_matches_finite_differences():
    rng = np.random.default_rng(4)
    W1, W2 = rng.normal(size=(5, 6)), rng.normal(size=(6, 1))

    def f(x):
        return ad.mean(ad.tanh(ad.relu(x @ W1) @ W2))

    assert ad.finite_diff_check(f, rng.normal(size=(4, 5))) <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_finite_diff_exact_for_linear(seed):
    x = np.random.default_rng(seed).normal(size=(3, 4))
    assert ad.finite_diff_check(lambda t: t.sum(), x) <= 1e-9


def test_finite_diff_sigmoid_mean():
    x = np.random.default_rng(0).normal(size=(8, 8))
    assert ad.finite_diff_check(lambda t: ad.sigmoid(t).mean(), x, eps=1e-5) <= 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_finite_diff_nan_reported_as_failure():
    err = ad.finite_diff_check(lambda t: ad.log(t - 10.0).sum(), np.ones(3))
    assert not err <= 1e-4


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.finite_diff_check(lambda t: t.sum(), np.ones(2), eps=0.0)


def test_op_suite_ten_seeds():
    results = run_suite(range(10))
    bad = [(r.name, r.max_error) for r in results if not r.ok]
    assert not bad
    assert {r.tolerance for r in results} == {TOLERANCE, PENALTY_TOLERANCE}


# second order ----------------------------------------------------------------


def test_grad_norm_of_sum_is_sqrt_n_with_zero_gradient():
    c = leaf(np.random.default_rng(0).normal(size=7))
    norm = ad.grad_norm_graph(c.sum(), c)
    assert norm.item() == pytest.approx(math.sqrt(7))
    (g,) = ad.grad(norm, [c])
    np.testing.assert_allclose(g.data, 0.0, atol=1e-15)


def test_grad_norm_of_half_square():
    cv = np.array([3.0, -4.0, 12.0])
    c = leaf(cv)
    norm = ad.grad_norm_graph((c * c).sum() * 0.5, c)
    assert norm.item() == pytest.approx(13.0)
    (g,) = ad.grad(norm, [c])
    np.testing.assert_allclose(g.data, cv / 13.0, atol=1e-14)


def test_penalty_second_order_finite_differences():
    for seed in range(3):
        f, x = penalty_case(np.random.default_rng(seed))
        assert ad.finite_diff_check(f, x) <= 1e-3


def test_penalty_gradient_wrt_critic_params():
    # d(penalty)/d(theta) for a conv critic, checked per parameter tensor
    rng = np.random.default_rng(11)
    mix = rng.normal(size=(3, 5, 2))
    k = rng.normal(size=(3, 2, 3)) * 0.5
    w = rng.normal(size=(15, 1))

    def penalty_of(kern):
        x = Tensor(mix, requires_grad=True)
        score = (ad.relu(ad.conv1d(x, kern)).reshape(3, 15) @ w).sum()
        n = ad.grad_norm_graph(score, x, batch_axis=0)
        d = n - 1.0
        return (d * d).mean()

    assert ad.finite_diff_check(penalty_of, k) <= 1e-3


def test_second_order_rejects_unsupported_op():
    x = leaf(np.ones(3))
    with pytest.raises(SecondOrderError) as info:
        ad.grad_norm_graph(ad.log_softmax(x).sum(), x)
    assert "log_softmax" in str(info.value)


def test_no_grad_records_nothing():
    x = leaf(np.ones(2))
    with ad.no_grad():
        y = ad.tanh(x) * 2.0
    assert y.is_leaf and not y.requires_grad


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_check_finite_flags_nan():
    with ad.check_finite():
        with pytest.raises(FloatingPointError):
            ad.log(Tensor(np.array([-1.0])))


def test_gradients_bit_identical_across_runs():
    def run():
        rng = np.random.default_rng(9)
        x = leaf(rng.normal(size=(4, 3)))
        W = leaf(rng.normal(size=(3, 2)))
        ad.backward(ad.softmax(x @ W).sum() + ad.l2_norm(W))
        return x.grad.tobytes() + W.grad.tobytes()

    assert run() == run()


# properties ------------------------------------------------------------------

finite = st.floats(-5, 5, allow_nan=False, width=64)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    s = ad.softmax(x).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(-1), 1.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=finite))
def test_log_softmax_matches_log_of_softmax(x):
    np.testing.assert_allclose(ad.log_softmax(x).data, np.log(ad.softmax(x).data), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(2, 6), st.integers(1, 3)), elements=finite),
    st.sampled_from([1, 3, 5]),
    st.integers(1, 3),
)
def test_unfold_fold_adjoint(x, k, cout):
    # <unfold(x), y> == <x, fold(y)> for every y
    y = np.random.default_rng(0).normal(size=x.shape[:2] + (k * x.shape[2],))
    lhs = (ad.unfold(x, k).data * y).sum()
    rhs = (x * ad.fold(y, k, x.shape[2]).data).sum()
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_gaussian_noise_zero_sigma_is_identity(x):
    out = ad.gaussian_noise_add(x, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out.data, x)
