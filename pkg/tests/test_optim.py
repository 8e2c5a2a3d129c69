import numpy as np
import pytest
from numpy import testing as npt

from src.autodiff import ops
from src.autodiff.optim import AdamOptimizer, AdamState, adam_step, clip_grad_norm, warmup_factor
from src.autodiff.tensor import Tensor, backward, reset_tape
from src.utils.errors import NonFiniteError


def test_zero_gradients_leave_parameters_unchanged():
    w = Tensor([1.0, -2.0], requires_grad=True)
    state = AdamState()
    adam_step({"w": w}, {"w": np.zeros(2)}, state, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8, step=1, warmup=0)
    npt.assert_array_equal(w.data, [1.0, -2.0])
    npt.assert_array_equal(state.m["w"], [0.0, 0.0])
    npt.assert_array_equal(state.v["w"], [0.0, 0.0])


def test_quadratic_converges():
    w = Tensor([1.0], requires_grad=True)
    optimizer = AdamOptimizer({"w": w}, lr=0.1, warmup=0)
    for _ in range(200):
        reset_tape()
        optimizer.zero_grad()
        backward(ops.sum(ops.mul(w, w)))
        optimizer.step(optimizer.collect_grads())
    assert abs(w.item()) < 1e-2


def test_warmup_scales_first_step():
    assert warmup_factor(1, 10) == pytest.approx(0.1)
    assert warmup_factor(10, 10) == 1.0
    assert warmup_factor(50, 10) == 1.0
    assert warmup_factor(1, 0) == 1.0

    # Le premier pas Adam vaut lr effectif * signe(g)
    w = Tensor([0.0], requires_grad=True)
    adam_step({"w": w}, {"w": np.array([0.5])}, AdamState(), lr=1.0, beta1=0.9, beta2=0.999,
              eps=1e-8, step=1, warmup=10)
    assert w.item() == pytest.approx(-0.1, rel=1e-6)


def test_non_finite_gradient_names_parameter():
    w = Tensor([0.0], requires_grad=True)
    with pytest.raises(NonFiniteError, match="layer0.W_Q"):
        adam_step({"layer0.W_Q": w}, {"layer0.W_Q": np.array([np.nan])}, AdamState(), 0.1, 0.9, 0.999,
                  1e-8, step=3, warmup=0)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    assert total == pytest.approx(1.0, rel=1e-9)
    npt.assert_allclose(grads["a"] / grads["b"], [0.75])

    small = {"a": np.array([0.1])}
    clip_grad_norm(small, 1.0)
    npt.assert_array_equal(small["a"], [0.1])
