import numpy as np
import pytest

from kae.model import AutoencoderConfig, build
from kae.optim import Adam, AdamState, adam_step


def reference_adam(theta, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar loop transcription of the update rule."""
    theta = float(theta)
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        g = g + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat, vhat = m / (1 - b1 ** t), v / (1 - b2 ** t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
    return theta


def test_first_step_hand_value():
    theta = np.array([1.0])
    state = AdamState(1, lr=1e-3)
    adam_step([theta], [np.array([0.5])], state)
    assert state.t == 1
    assert state.m[0] == pytest.approx(0.05) and state.v[0] == pytest.approx(0.00025)
    assert theta[0] == pytest.approx(1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), rel=1e-15)
    assert theta[0] == pytest.approx(0.999, abs=1e-9)


def test_matches_scalar_reference_over_many_steps():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal(25)
    theta = np.array([0.3])
    state = AdamState(1, lr=1e-2, weight_decay=1e-3)
    for g in grads:
        adam_step([theta], [np.array([g])], state)
    assert theta[0] == pytest.approx(reference_adam(0.3, grads, 1e-2, 1e-3), rel=1e-12)


def test_zero_gradient_no_decay_is_a_no_op():
    theta = np.array([0.7, -2.0])
    adam_step([theta], [np.zeros(2)], AdamState(2, lr=1e-3))
    assert theta.tolist() == [0.7, -2.0]


def test_decay_shrinks_positive_parameters():
    theta = np.array([0.7])
    adam_step([theta], [np.zeros(1)], AdamState(1, lr=1e-3, weight_decay=1e-4))
    assert theta[0] < 0.7


def test_first_step_bounded_by_lr():
    rng = np.random.default_rng(1)
    theta = rng.standard_normal(1000)
    before = theta.copy()
    adam_step([theta], [rng.standard_normal(1000) * 10], AdamState(1000, lr=1e-3))
    assert np.all(np.abs(theta - before) <= 1.01e-3)


def test_deterministic_and_shape_checks():
    rng = np.random.default_rng(2)
    g = rng.standard_normal((3, 2))
    a, b = np.ones((3, 2)), np.ones((3, 2))
    adam_step([a], [g], AdamState(6, lr=1e-3))
    adam_step([b], [g], AdamState(6, lr=1e-3))
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        adam_step([a], [np.ones(6)], AdamState(6))
    with pytest.raises(ValueError):
        adam_step([a], [g], AdamState(5))


def test_adam_clamps_wavelet_scale_after_update():
    model = build(AutoencoderConfig(6, 2, "wavkan", master_seed=1))
    opt = Adam(model, lr=10.0)
    grads = [{k: (np.full_like(v, 1.0) if k == "scale" else np.zeros_like(v)) for k, v in layer.tensors.items()}
             for layer in model.layers]
    opt.step(*grads)
    assert all(np.all(layer["scale"] >= 1e-3) for layer in model.layers)
    assert all(layer["scale"].min() == 1e-3 for layer in model.layers)
