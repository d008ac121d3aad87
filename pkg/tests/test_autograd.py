import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bamsr import ops
from bamsr.autograd import Tensor, backward, inject_gradient_fault, no_grad
from bamsr.gradcheck import grad_check, relative_error, tensor_relative_error


def test_sum_gradient_is_ones(rng):
    x = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    backward(ops.sum_all(x))
    assert_array_equal(x.grad, np.ones_like(x.data))


def test_square_half_gradient_is_x(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
    backward(ops.scale(ops.sum_all(ops.mul(x, x)), 0.5))
    assert_allclose(x.grad, x.data)


def test_shared_node_accumulates_within_one_pass(rng):
    x = Tensor(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)
    backward(ops.sum_all(ops.add(x, x)))
    assert_array_equal(x.grad, np.full((1, 1, 2, 2), 2.0))


def test_gradients_reset_between_calls(rng):
    x = Tensor(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)
    backward(ops.sum_all(x))
    backward(ops.sum_all(x))
    assert_array_equal(x.grad, np.ones((1, 1, 2, 2)))


def test_non_scalar_loss_rejected(rng):
    x = Tensor(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(ops.relu(x))


def test_untraced_loss_rejected():
    with pytest.raises(ValueError, match="require grad"):
        backward(ops.sum_all(Tensor(np.ones((1, 1, 1, 1)))))


def test_no_grad_builds_no_graph(rng):
    x = Tensor(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)
    with no_grad():
        y = ops.sigmoid(x)
    assert not y.requires_grad


def test_item_requires_single_element():
    with pytest.raises(ValueError):
        Tensor(np.zeros(3)).item()


def test_integer_data_becomes_float():
    assert Tensor(np.arange(4)).dtype == np.float64


def test_injected_fault_is_detected(rng):
    x = rng.normal(size=(1, 2, 3, 3))
    fn = lambda t: ops.sum_all(ops.sigmoid(t))
    assert grad_check(fn, x) <= 1e-6
    with inject_gradient_fault("sigmoid", 1.01):
        assert grad_check(fn, x) > 1e-3


def test_grad_check_rejects_float32_params():
    p = Tensor(np.ones(2, dtype=np.float32))
    with pytest.raises(TypeError):
        grad_check(lambda t: ops.sum_all(t), np.ones((1, 2, 1, 1)), params=[p])


def test_relative_error_floor():
    assert_array_equal(relative_error(np.zeros(2), np.zeros(2)), np.zeros(2))
    assert relative_error(np.array([1e-9]), np.array([0.0]))[0] == pytest.approx(0.1)


def test_tensor_relative_error():
    a = np.array([3.0, 4.0])
    assert tensor_relative_error(a, a) == 0.0
    assert tensor_relative_error(a, 1.01 * a) == pytest.approx(0.01 / 1.01)
    # one tiny noisy element does not dominate
    assert tensor_relative_error(np.array([1.0, 1e-9]), np.array([1.0, 2e-9])) < 1e-8
