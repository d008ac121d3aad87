import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from bamsr import ops
from bamsr.autograd import Tensor, backward, count_ops
from bamsr.gradcheck import grad_check

import oracles


@pytest.fixture(scope="module")
def oracle_errors():
    return oracles.op_oracle_errors(np.random.default_rng(99), trials=100)


@pytest.mark.parametrize("op", ["conv2d", "global_avg_pool", "channel_max_pool",
                                "broadcast_hadamard", "pixel_shuffle", "sigmoid", "l1_loss"])
def test_matches_loop_oracle(oracle_errors, op):
    assert oracle_errors[op] <= 1e-12


def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(2, 3, 5, 4))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    assert_allclose(ops.conv2d(Tensor(x), Tensor(w), padding=1).data, x)


def test_conv2d_rejects_bad_shapes(rng):
    x = Tensor(rng.normal(size=(1, 3, 4, 4)))
    with pytest.raises(ValueError, match="channels"):
        ops.conv2d(x, Tensor(rng.normal(size=(2, 4, 3, 3))))
    with pytest.raises(ValueError, match="larger than padded"):
        ops.conv2d(x, Tensor(rng.normal(size=(2, 3, 5, 5))))
    with pytest.raises(ValueError, match="bias"):
        ops.conv2d(x, Tensor(rng.normal(size=(2, 3, 3, 3))), Tensor(np.zeros(3)))
    with pytest.raises(ValueError, match="4-D"):
        ops.conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(rng.normal(size=(2, 3, 3, 3))))


def test_conv2d_flop_tally(rng):
    x = Tensor(rng.normal(size=(2, 4, 6, 5)))
    w = Tensor(rng.normal(size=(3, 4, 3, 3)))
    with count_ops() as counter:
        ops.conv2d(x, w, padding=1)
    assert counter.total == 2 * 9 * 4 * 3 * 6 * 5 * 2


def test_channel_max_tie_goes_to_lowest_channel():
    x = Tensor(np.ones((1, 3, 2, 2)), requires_grad=True)
    backward(ops.sum_all(ops.channel_max_pool(x)))
    expected = np.zeros((1, 3, 2, 2))
    expected[:, 0] = 1.0
    assert_array_equal(x.grad, expected)


def test_sigmoid_is_stable_for_large_inputs():
    z = np.array([-1000.0, -50.0, 0.0, 50.0, 1000.0]).reshape(1, 1, 1, 5)
    with np.errstate(over="raise", invalid="raise"):
        y = ops.sigmoid(Tensor(z)).data
    assert np.all((y > 0) & (y < 1))
    assert y[0, 0, 0, 2] == 0.5
    assert abs(y[0, 0, 0, 4] - 1.0) <= 1e-12


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_sigmoid_stays_open_interval_when_saturated(dtype):
    z = np.array([-200.0, -40.0, 40.0, 200.0], dtype=dtype).reshape(1, 1, 2, 2)
    y = ops.sigmoid(Tensor(z)).data
    assert y.dtype == dtype
    assert np.all((y > 0) & (y < 1))


def test_prelu_zero_takes_positive_branch():
    x = Tensor(np.zeros((1, 2, 1, 1)), requires_grad=True)
    slope = Tensor(np.array([0.25, 0.5]), requires_grad=True)
    backward(ops.sum_all(ops.prelu(x, slope)))
    assert_array_equal(x.grad, np.ones((1, 2, 1, 1)))
    assert_array_equal(slope.grad, np.zeros(2))


def test_mul_rejects_incompatible_shapes(rng):
    with pytest.raises(ValueError, match="mismatch"):
        ops.mul(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 3, 1, 1))))


def _probe(rng, shape):
    r = Tensor(rng.normal(size=shape))
    return lambda t: ops.sum_all(ops.mul(t, r))


def _resize_case(rows, cols):
    return (1, 3, 5, 6), [], lambda x, p: ops.resize_separable(x, rows, cols), (1, 3, 10, 12)


GRAD_CASES = {
    "conv2d": lambda rng: ((2, 3, 5, 4), [Tensor(rng.normal(size=(2, 3, 3, 3))), Tensor(rng.normal(size=2))],
                           lambda x, p: ops.conv2d(x, p[0], p[1], padding=1), (2, 2, 5, 4)),
    "global_avg_pool": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.global_avg_pool(x), (2, 3, 1, 1)),
    "global_max_pool": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.global_max_pool(x), (2, 3, 1, 1)),
    "channel_max_pool": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.channel_max_pool(x), (2, 1, 4, 5)),
    "channel_mean_pool": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.channel_mean_pool(x), (2, 1, 4, 5)),
    "prelu": lambda rng: ((2, 3, 4, 5), [Tensor(np.array([0.25, 0.1, 0.5]))],
                          lambda x, p: ops.prelu(x, p[0]), (2, 3, 4, 5)),
    "relu": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.relu(x), (2, 3, 4, 5)),
    "sigmoid": lambda rng: ((2, 3, 4, 5), [], lambda x, p: ops.sigmoid(x), (2, 3, 4, 5)),
    "mul_broadcast": lambda rng: ((2, 3, 4, 5), [Tensor(rng.normal(size=(2, 3, 1, 1)))],
                                  lambda x, p: ops.mul(x, p[0]), (2, 3, 4, 5)),
    "broadcast_hadamard": lambda rng: (
        (2, 3, 4, 5), [Tensor(rng.uniform(size=(2, 3, 1, 1))), Tensor(rng.uniform(size=(2, 1, 4, 5)))],
        lambda x, p: ops.broadcast_hadamard(p[0], p[1], x), (2, 3, 4, 5)),
    "concat_channels": lambda rng: ((2, 3, 4, 5), [Tensor(rng.normal(size=(2, 2, 4, 5)))],
                                    lambda x, p: ops.concat_channels([x, p[0]]), (2, 5, 4, 5)),
    "pixel_shuffle": lambda rng: ((2, 12, 3, 4), [], lambda x, p: ops.pixel_shuffle(x, 2), (2, 3, 6, 8)),
    "resize": lambda rng: _resize_case(rng.normal(size=(10, 5)), rng.normal(size=(12, 6))),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(5)
    shape, params, fn, out_shape = GRAD_CASES[name](rng)
    probe = _probe(rng, out_shape)
    x = rng.normal(size=shape)
    assert grad_check(lambda t: probe(fn(t, params)), x, params=params) <= 1e-5


def test_l1_loss_gradient(rng):
    target = Tensor(rng.normal(size=(2, 3, 4, 4)))
    x = rng.normal(size=(2, 3, 4, 4))
    assert grad_check(lambda t: ops.l1_loss(t, target), x) <= 1e-6


@given(s=st.integers(1, 4), c=st.integers(1, 3), h=st.integers(1, 5), w=st.integers(1, 5),
       seed=st.integers(0, 2 ** 31))
def test_pixel_shuffle_is_a_bijection(s, c, h, w, seed):
    x = np.random.default_rng(seed).normal(size=(2, c * s * s, h, w))
    y = ops.pixel_shuffle_array(x, s)
    assert_array_equal(ops.pixel_unshuffle_array(y, s), x)
    assert_array_equal(np.sort(y, axis=None), np.sort(x, axis=None))


@given(seed=st.integers(0, 2 ** 31), n=st.integers(2, 4))
def test_conv2d_is_batch_equivariant(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2, 5, 5))
    w, b = Tensor(rng.normal(size=(3, 2, 3, 3))), Tensor(rng.normal(size=3))
    whole = ops.conv2d(Tensor(x), w, b, padding=1).data
    for i in range(n):
        assert_allclose(ops.conv2d(Tensor(x[i : i + 1]), w, b, padding=1).data[0], whole[i], atol=1e-12)


@given(seed=st.integers(0, 2 ** 31))
def test_hadamard_with_unit_weights_is_identity(seed):
    x = np.random.default_rng(seed).normal(size=(2, 3, 4, 4))
    out = ops.broadcast_hadamard(Tensor(np.ones((2, 3, 1, 1))), Tensor(np.ones((2, 1, 4, 4))), Tensor(x))
    assert_array_equal(out.data, x)
