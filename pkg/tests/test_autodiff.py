import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy import testing as npt

from src.autodiff import ops
from src.autodiff.gradcheck import finite_diff_check, relative_error
from src.autodiff.tensor import Tensor, backward, current_tape, no_grad, record_op, reset_tape
from src.utils.errors import DegenerateInputError, InvalidMaskError, ShapeError


def param(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_matmul_examples():
    npt.assert_array_equal(ops.matmul(Tensor(np.eye(2)), Tensor([[1, 2], [3, 4]])).data, [[1, 2], [3, 4]])
    npt.assert_array_equal(ops.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data, [[11]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient():
    rng = np.random.default_rng(0)
    a, b = param(rng.uniform(-1, 1, (3, 4))), param(rng.uniform(-1, 1, (4, 2)))
    assert finite_diff_check(lambda: ops.sum(ops.matmul(a, b)), [a, b]) < 1e-6


def test_layer_norm_examples():
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    npt.assert_allclose(ops.layer_norm(Tensor([1.0, 1.0, 1.0, 1.0]), ones, zeros).data, np.zeros(4))
    out = ops.layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)
    npt.assert_allclose(out.data, [-1.0, 1.0])


def test_layer_norm_rejects_single_value():
    with pytest.raises(DegenerateInputError):
        ops.layer_norm(Tensor([2.0]), Tensor([1.0]), Tensor([0.0]))


def test_layer_norm_gradient():
    rng = np.random.default_rng(1)
    x, gain, bias = (param(rng.uniform(-1, 1, 8)) for _ in range(3))
    mix = Tensor(rng.uniform(-1, 1, 8))
    f = lambda: ops.sum(ops.mul(ops.layer_norm(x, gain, bias), mix))
    assert finite_diff_check(f, [x, gain, bias]) < 1e-5


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 16), elements=st.floats(-10, 10)))
def test_layer_norm_normalizes(x):
    if np.ptp(x) < 1e-3:
        return
    out = ops.layer_norm(Tensor(x), Tensor(np.ones_like(x)), Tensor(np.zeros_like(x)), eps=1e-30).data
    assert abs(out.mean()) < 1e-10
    assert abs(out.var() - 1.0) < 1e-6


def test_masked_softmax_examples():
    npt.assert_allclose(ops.masked_softmax(Tensor([0.0, 0.0, 0.0]), np.ones(3, bool)).data, [1 / 3] * 3)
    out = ops.masked_softmax(Tensor([5.0, 100.0, -2.0]), np.array([True, False, False])).data
    npt.assert_array_equal(out, [1.0, 0.0, 0.0])
    out = ops.masked_softmax(Tensor([math.log(2), 0.0, 0.0]), np.array([True, True, False])).data
    npt.assert_allclose(out, [2 / 3, 1 / 3, 0.0], atol=1e-15)
    assert out[2] == 0.0


def test_masked_softmax_rejects_empty_row():
    with pytest.raises(InvalidMaskError):
        ops.masked_softmax(Tensor([[1.0, 2.0], [3.0, 4.0]]), np.array([[True, False], [False, False]]))


def test_masked_softmax_cross_entropy_gradient():
    logits = param([0.3, -0.7, 0.9])
    f = lambda: ops.cross_entropy(ops.reshape(ops.masked_softmax(logits, np.ones(3, bool)), (1, 3)), np.array([2]))
    assert finite_diff_check(f, logits) < 1e-5


def test_gelu_values():
    out = ops.gelu(Tensor([0.0, 1.0, 20.0, -20.0])).data
    assert out[0] == 0.0
    assert abs(out[1] - 0.8412) < 1e-3
    assert abs(out[2] - 20.0) < 1e-6
    assert abs(out[3]) < 1e-6


def test_backward_examples():
    x = param([1.0, 2.0, 3.0])
    backward(ops.sum(x))
    npt.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    y = param([1.0, 2.0])
    backward(ops.sum(ops.mul(y, y)))
    npt.assert_array_equal(y.grad, [2.0, 4.0])


def test_backward_rejects_non_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(ShapeError):
        backward(ops.mul(x, 2.0))


def test_gradients_accumulate_over_shared_inputs():
    x = param([3.0])
    backward(ops.sum(ops.add(ops.mul(x, x), x)))
    npt.assert_array_equal(x.grad, [7.0])


def test_no_grad_records_nothing():
    reset_tape()
    x = param([1.0, 2.0])
    with no_grad():
        y = ops.mul(x, x)
    assert y.node_id is None
    assert not y.requires_grad
    assert len(current_tape()) == 0


def test_finite_diff_check_sum_of_squares():
    p = param([1.0, 2.0])
    assert finite_diff_check(lambda: ops.sum(ops.mul(p, p)), p, h=1e-5) < 1e-8


def test_finite_diff_check_catches_wrong_backward():
    def broken_square(x: Tensor) -> Tensor:
        return record_op(x.data ** 2, "broken", (x,), lambda g: (g * 3.0 * x.data,))

    p = param([0.5, -1.5, 2.0])
    assert finite_diff_check(lambda: ops.sum(broken_square(p)), p) > 1e-2


def test_finite_diff_check_catches_dropped_gradient():
    def dropped_square(x: Tensor) -> Tensor:
        return record_op(x.data ** 2, "dropped", (x,), lambda g: (np.zeros_like(x.data),))

    p = param(np.linspace(0.5, 2.0, 20))
    error = finite_diff_check(lambda: ops.sum(dropped_square(p)), p, max_coords=8,
                              rng=np.random.default_rng(0), noise_floor=1e-5)
    assert error == pytest.approx(1.0)


def test_relative_error_floor():
    npt.assert_array_equal(relative_error(np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert relative_error(np.array([1e-12]), np.array([0.0]))[0] == pytest.approx(1e-4)


@pytest.mark.parametrize("name, build", [
    ("gelu", lambda x: ops.gelu(x)),
    ("sigmoid", lambda x: ops.sigmoid(x)),
    ("div", lambda x: ops.div(x, ops.add(ops.mul(x, x), 1.0))),
    ("transpose", lambda x: ops.transpose(ops.reshape(x, (2, 3)))),
    ("concat", lambda x: ops.concat([x, ops.mul(x, x)], axis=0)),
    ("index", lambda x: ops.index(x, np.array([0, 0, 4]))),
    ("mean", lambda x: ops.mean(ops.mul(x, x))),
])
def test_elementwise_gradients(name, build):
    rng = np.random.default_rng(3)
    x = param(rng.uniform(-1, 1, 6))
    weights = Tensor(rng.uniform(-1, 1, build(Tensor(x.data)).shape))
    assert finite_diff_check(lambda: ops.sum(ops.mul(build(x), weights)), x) < 1e-6, name


def test_linear_and_embedding_gradients():
    rng = np.random.default_rng(4)
    x = param(rng.uniform(-1, 1, (2, 3, 4)))
    w, b = param(rng.uniform(-1, 1, (5, 4))), param(rng.uniform(-1, 1, 5))
    table = param(rng.uniform(-1, 1, (6, 4)))
    ids = np.array([[0, 5, 5], [2, 1, 0]])
    f = lambda: ops.sum(ops.mul(ops.linear(ops.add(x, ops.embedding(table, ids)), w, b), 0.3))
    assert finite_diff_check(f, [x, w, b, table]) < 1e-6


def test_binary_cross_entropy_gradient_and_baseline():
    logits = param(np.zeros((2, 3)))
    targets = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.0]])
    assert ops.binary_cross_entropy_with_logits(logits, targets).item() == pytest.approx(math.log(2))
    logits.data = np.random.default_rng(5).uniform(-2, 2, (2, 3))
    assert finite_diff_check(lambda: ops.binary_cross_entropy_with_logits(logits, targets), logits) < 1e-6
