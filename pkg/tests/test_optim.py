import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from offlm import autograd as ag
from offlm.autograd import Tensor
from offlm.errors import ConfigError
from offlm.optim import AdamState, adam_step, clip_global_norm, global_grad_norm


def leaf(values):
    t = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
    t.grad = np.zeros_like(t.data)
    return t


def test_first_adam_step_matches_closed_form():
    # With bias correction, step one reduces to lr * g / (|g| + eps').
    g = np.array([0.5, -2.0, 0.1])
    p = leaf([1.0, 1.0, 1.0])
    p.grad = g.copy()
    state = AdamState()
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    adam_step([("p", p)], state, lr, beta1=b1, beta2=b2, epsilon=eps)

    m_hat = (1 - b1) * g / (1 - b1)
    v_hat = (1 - b2) * g * g / (1 - b2)
    expected = 1.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)


def test_three_steps_match_manual_recurrence():
    grads = [np.array([1.0, -1.0]), np.array([0.5, 0.5]), np.array([-0.2, 2.0])]
    p = leaf([0.0, 0.0])
    state = AdamState()
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8

    x = np.zeros(2)
    m = np.zeros(2)
    v = np.zeros(2)
    for t, g in enumerate(grads, start=1):
        p.grad = g.copy()
        adam_step([("p", p)], state, lr, epsilon=eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        np.testing.assert_allclose(p.data, x, rtol=1e-12)
    assert state.step_count == 3


def test_moment_buffers_keyed_by_name():
    a, b = leaf([1.0]), leaf([2.0])
    a.grad = np.array([1.0])
    b.grad = np.array([-1.0])
    state = AdamState()
    adam_step([("a", a), ("b", b)], state, 1e-3)
    assert set(state.first_moment) == {"a", "b"}
    assert set(state.second_moment) == {"a", "b"}


def test_adam_skips_params_without_grad():
    p = Tensor(np.array([1.0]), requires_grad=True)
    adam_step([("p", p)], AdamState(), 1e-3)
    np.testing.assert_array_equal(p.data, [1.0])


def test_global_grad_norm_matches_numpy():
    a = leaf(np.ones((2, 2)))
    b = leaf(np.ones(5))
    a.grad = np.full((2, 2), 3.0)
    b.grad = np.full(5, 4.0)
    expected = math.sqrt((9.0 * 4) + (16.0 * 5))
    assert abs(global_grad_norm([a, b]) - expected) < 1e-12


def test_clip_rescales_only_above_threshold():
    a = leaf([3.0, 4.0])
    a.grad = np.array([3.0, 4.0])
    factor = clip_global_norm([a], max_norm=1.0)
    np.testing.assert_allclose(factor, 0.2, rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(a.grad), 1.0, rtol=1e-12)

    b = leaf([0.1])
    b.grad = np.array([0.1])
    before = b.grad.copy()
    assert clip_global_norm([b], max_norm=1.0) == 1.0
    np.testing.assert_array_equal(b.grad, before)


def test_clip_requires_positive_max_norm():
    with pytest.raises(ConfigError):
        clip_global_norm([], max_norm=0.0)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31),
    max_norm=st.floats(min_value=0.01, max_value=10.0),
)
def test_clipped_norm_never_exceeds_bound(seed, max_norm):
    rng = np.random.default_rng(seed)
    tensors = []
    for shape in [(3,), (2, 2), (4, 1)]:
        t = leaf(rng.standard_normal(shape))
        t.grad = rng.standard_normal(shape) * 10
        tensors.append(t)
    clip_global_norm(tensors, max_norm)
    assert global_grad_norm(tensors) <= max_norm * (1 + 1e-9)


def test_adam_descends_a_quadratic():
    p = leaf([5.0])
    state = AdamState()
    for _ in range(400):
        p.grad = 2.0 * p.data
        adam_step([("p", p)], state, lr=0.05)
    assert abs(float(p.data[0])) < 0.05


def test_adam_descends_through_autograd_graph():
    w = Tensor(np.array([4.0, -3.0]), requires_grad=True)
    state = AdamState()
    for _ in range(300):
        ag.zero_grads([w])
        loss = ag.tensor_sum(ag.mul(w, w))
        ag.backward(loss)
        adam_step([("w", w)], state, lr=0.1)
    assert float(ag.tensor_sum(ag.mul(w, w)).data) < 1e-3
