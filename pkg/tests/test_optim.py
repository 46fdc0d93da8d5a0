import numpy as np
import pytest

from src.errors import ShapeMismatch
from src.nn.layers import Parameter
from src.nn.optim import Adam, AdamState, optimizer_step


def test_scalar_quadratic_converges():
    params = {"w": np.array([0.0])}
    state = AdamState()
    for _ in range(500):
        grads = {"w": 2.0 * (params["w"] - 3.0)}
        params, state = optimizer_step(params, grads, state, lr=0.05)
    assert abs(params["w"][0] - 3.0) < 1e-2
    assert state.step == 500


def test_constant_gradient_moves_monotonically_against_its_sign():
    params = {"a": np.array([1.0]), "b": np.array([1.0])}
    state = AdamState()
    trail_a, trail_b = [], []
    for _ in range(50):
        params, state = optimizer_step(params, {"a": np.array([0.3]), "b": np.array([-2.0])}, state, lr=0.01)
        trail_a.append(params["a"][0])
        trail_b.append(params["b"][0])
    assert np.all(np.diff(trail_a) < 0)
    assert np.all(np.diff(trail_b) > 0)


def test_first_step_has_learning_rate_magnitude():
    params, _ = optimizer_step({"w": np.array([0.0, 0.0])}, {"w": np.array([5.0, -0.1])}, AdamState(), lr=0.1)
    assert np.allclose(params["w"], [-0.1, 0.1], atol=1e-6)


def test_state_is_not_mutated():
    state = AdamState()
    optimizer_step({"w": np.ones(2)}, {"w": np.ones(2)}, state, lr=0.1)
    assert state.step == 0 and state.m == {}


def test_missing_gradient_counts_as_zero():
    params, _ = optimizer_step({"w": np.ones(2)}, {}, AdamState(), lr=0.1)
    assert np.array_equal(params["w"], np.ones(2))


def test_gradient_shape_must_match():
    with pytest.raises(ShapeMismatch):
        optimizer_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState(), lr=0.1)


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError):
        optimizer_step({"w": np.ones(2)}, {"w": np.ones(2)}, AdamState(), lr=0.0)


def test_adam_wrapper_updates_parameters_in_place():
    param = Parameter(np.array([2.0]))
    optimizer = Adam({"w": param}, lr=0.05)
    for _ in range(300):
        optimizer.zero_grad()
        param.grad = 2.0 * param.value
        optimizer.step()
    assert abs(param.value[0]) < 0.05
