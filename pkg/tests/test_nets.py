"""The hand-rolled MLP: forward, backward, Adam, and checkpointing."""

import numpy as np
import pytest

from flowrl.nets import (
    MlpGrads,
    adam_init,
    adam_step,
    clone_mlp,
    flatten_params,
    init_mlp,
    load_mlp,
    mlp_backward,
    mlp_forward,
    numeric_grad,
    save_mlp,
    set_params,
    soft_update,
)


def quadratic_loss(net, x, y):
    out, cache = mlp_forward(net, x)
    diff = out - y
    loss = 0.5 * float((diff * diff).sum())
    grads = mlp_backward(net, cache, diff)
    return loss, grads


def test_init_shapes_and_zero_option():
    rng = np.random.default_rng(0)
    net = init_mlp(3, 2, rng, hidden=8)
    assert net.dims == (3, 8, 8, 2)
    assert net.w1.shape == (3, 8)
    assert net.w3.shape == (8, 2)
    zero = init_mlp(3, 2, rng, hidden=8, zero=True)
    assert all(np.all(a == 0.0) for a in zero.arrays())


def test_zero_net_outputs_bias():
    rng = np.random.default_rng(0)
    net = init_mlp(4, 3, rng, hidden=8, zero=True)
    net.b3[:] = [1.0, -2.0, 0.5]
    out, _ = mlp_forward(net, np.zeros((5, 4)))
    assert np.allclose(out, [1.0, -2.0, 0.5])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    for i in range(5):
        in_dim = int(rng.integers(2, 6))
        out_dim = int(rng.integers(1, 4))
        net = init_mlp(in_dim, out_dim, rng, hidden=int(rng.integers(4, 10)))
        # random biases keep pre-activations off the ReLU kink, where the
        # subgradient convention and central differences disagree by design
        net.b1[:] = rng.normal(scale=0.5, size=net.b1.shape)
        net.b2[:] = rng.normal(scale=0.5, size=net.b2.shape)
        x = rng.normal(size=(3, in_dim))
        y = rng.normal(size=(3, out_dim))
        _, grads = quadratic_loss(net, x, y)
        flat = np.concatenate([g.ravel() for g in grads.arrays()])
        fd = numeric_grad(lambda: quadratic_loss(net, x, y)[0], net)
        denom = np.maximum(np.maximum(np.abs(flat), np.abs(fd)), 1e-6)
        assert np.max(np.abs(flat - fd) / denom) <= 1e-4


def test_numeric_grad_restores_parameters():
    rng = np.random.default_rng(3)
    net = init_mlp(2, 2, rng, hidden=4)
    before = flatten_params(net).copy()
    numeric_grad(lambda: float(flatten_params(net).sum()), net)
    assert np.array_equal(flatten_params(net), before)


def test_numeric_grad_of_linear_functional_is_one():
    rng = np.random.default_rng(3)
    net = init_mlp(2, 2, rng, hidden=4)
    fd = numeric_grad(lambda: float(flatten_params(net).sum()), net)
    assert np.allclose(fd, 1.0, atol=1e-7)


def test_adam_first_step_is_signed_lr():
    # After one update m_hat = g and v_hat = g^2, so the step is
    # -lr * g / (|g| + eps): essentially -lr * sign(g).
    rng = np.random.default_rng(1)
    net = init_mlp(2, 2, rng, hidden=4)
    before = flatten_params(net).copy()
    grads = MlpGrads(
        *[np.where(rng.random(a.shape) < 0.5, 1.0, -1.0) for a in net.arrays()]
    )
    state = adam_init(net)
    adam_step(net, grads, state, lr=0.01)
    delta = flatten_params(net) - before
    signs = np.concatenate([g.ravel() for g in grads.arrays()])
    assert np.allclose(delta, -0.01 * signs, atol=1e-8)
    assert state.step == 1


def test_soft_update_blends():
    rng = np.random.default_rng(2)
    online = init_mlp(2, 2, rng, hidden=4)
    target = init_mlp(2, 2, rng, hidden=4)
    expected = 0.9 * flatten_params(target) + 0.1 * flatten_params(online)
    soft_update(target, online, 0.1)
    assert np.allclose(flatten_params(target), expected, atol=1e-15)

    # tau=1 copies outright
    soft_update(target, online, 1.0)
    assert np.array_equal(flatten_params(target), flatten_params(online))


def test_clone_is_independent():
    rng = np.random.default_rng(4)
    net = init_mlp(2, 1, rng, hidden=4)
    twin = clone_mlp(net)
    twin.b3 += 1.0
    assert not np.allclose(net.b3, twin.b3)


def test_flatten_set_roundtrip():
    rng = np.random.default_rng(5)
    net = init_mlp(3, 2, rng, hidden=6)
    flat = flatten_params(net).copy()
    other = init_mlp(3, 2, rng, hidden=6, zero=True)
    set_params(other, flat)
    assert np.array_equal(flatten_params(other), flat)
    with pytest.raises(ValueError):
        set_params(other, flat[:-1])


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    net = init_mlp(4, 3, rng, hidden=8)
    path = tmp_path / "net.ckpt"
    save_mlp(path, net, seed=12, step=345)
    loaded, seed, step = load_mlp(path)
    assert (seed, step) == (12, 345)
    assert loaded.dims == net.dims
    assert np.array_equal(flatten_params(loaded), flatten_params(net))


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b'{"format": "something-else"}\n')
    with pytest.raises(ValueError, match="checkpoint"):
        load_mlp(path)
