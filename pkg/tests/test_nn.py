"""Finite-difference gradient checks and unit tests for the layer library."""

import numpy as np
import pytest

from beatbalance import nn


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    # 1e-4 floor keeps structurally-zero gradients (e.g. conv bias feeding
    # straight into batch norm) from tripping on finite-difference noise
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-4)
    return np.abs(a - b).max() / denom


def check_layer_grads(layer, x, train=True, dropout_seed=None):
    """Compare analytic input/param grads against finite differences.

    The forward is wrapped so every evaluation reuses the same dropout mask
    (fresh rng from a fixed seed), keeping the loss a deterministic function
    of inputs and parameters.
    """

    def ctx():
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        return nn.RunCtx(train=train, rng=rng, update_stats=False)

    rng_loss = np.random.default_rng(7)
    w = None

    def loss_from(y):
        nonlocal w
        if w is None:
            w = rng_loss.standard_normal(y.shape)
        return float((y * w).sum())

    # analytic
    y = layer.forward(x, ctx())
    base = loss_from(y)
    nn.zero_grads(layer.params())
    dx = layer.backward(w)

    def f():
        return loss_from(layer.forward(x, ctx()))

    assert f() == base
    gx = numeric_grad(f, x)
    assert rel_err(dx, gx) < 1e-6, f"input grad mismatch: {rel_err(dx, gx)}"
    for p in layer.params():
        gp = numeric_grad(f, p.value)
        assert rel_err(p.grad, gp) < 1e-6, f"param grad mismatch: {rel_err(p.grad, gp)}"


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_dense_grads(rng):
    layer = nn.Dense(5, 3, rng, dtype=np.float64)
    check_layer_grads(layer, rng.standard_normal((4, 5)))


@pytest.mark.parametrize("stride,k,h", [(1, 3, 4), (2, 3, 4), (1, 5, 6), (2, 5, 6), (2, 5, 7)])
def test_conv_grads(rng, stride, k, h):
    layer = nn.Conv2d(2, 3, k, rng, stride=stride, dtype=np.float64)
    check_layer_grads(layer, rng.standard_normal((2, h, h, 2)))


def test_batchnorm_grads_train(rng):
    layer = nn.BatchNorm(3, spatial=True, dtype=np.float64)
    layer.gamma.value[...] = rng.standard_normal(layer.gamma.value.shape)
    layer.beta.value[...] = rng.standard_normal(layer.beta.value.shape)
    check_layer_grads(layer, rng.standard_normal((4, 2, 2, 3)))


def test_batchnorm_grads_eval(rng):
    layer = nn.BatchNorm(4, spatial=False, dtype=np.float64)
    layer.running_mean[...] = rng.standard_normal(layer.running_mean.shape)
    layer.running_var[...] = rng.random(layer.running_var.shape) + 0.5
    check_layer_grads(layer, rng.standard_normal((6, 4)), train=False)


def test_batchnorm_running_stats_update_flag(rng):
    layer = nn.BatchNorm(3, spatial=True)
    x = rng.standard_normal((8, 4, 4, 3)).astype(np.float32)
    before = layer.running_mean.copy()
    layer.forward(x, nn.RunCtx(train=True, rng=None, update_stats=False))
    assert np.array_equal(layer.running_mean, before)
    layer.forward(x, nn.RunCtx(train=True, rng=None, update_stats=True))
    assert not np.array_equal(layer.running_mean, before)


@pytest.mark.parametrize("cls", [nn.ReLU, nn.Tanh, nn.Sigmoid, lambda: nn.LeakyReLU(0.2)])
def test_activation_grads(rng, cls):
    layer = cls()
    check_layer_grads(layer, rng.standard_normal((3, 7)) + 0.1)


def test_pool_upsample_grads(rng):
    check_layer_grads(nn.AvgPool2d(2), rng.standard_normal((2, 4, 4, 3)))
    check_layer_grads(nn.Upsample2d(2), rng.standard_normal((2, 3, 3, 3)))


def test_dropout_grads(rng):
    layer = nn.Dropout(0.4)
    check_layer_grads(layer, rng.standard_normal((5, 6)), dropout_seed=11)


def test_dropout_eval_identity(rng):
    layer = nn.Dropout(0.5)
    x = rng.standard_normal((4, 4))
    assert np.array_equal(layer.forward(x, nn.EVAL_CTX), x)


def test_sequential_micro_network_grads(rng):
    """4x4-image micro network touching every layer kind at once."""
    net = nn.Sequential(
        [
            nn.Conv2d(1, 2, 3, rng, dtype=np.float64),
            nn.BatchNorm(2, spatial=True, dtype=np.float64),
            nn.ReLU(),
            nn.AvgPool2d(2),
            nn.Dropout(0.3),
            nn.Flatten(),
            nn.Dense(8, 4, rng, dtype=np.float64),
            nn.Tanh(),
            nn.Dense(4, 2, rng, dtype=np.float64),
        ]
    )
    check_layer_grads(net, rng.standard_normal((3, 4, 4, 1)), dropout_seed=5)


def test_softmax_cross_entropy_matches_finite_differences(rng):
    logits = rng.standard_normal((6, 7))
    labels = rng.integers(0, 7, size=6)
    _, probs, d = nn.softmax_cross_entropy(logits, labels)
    expected = (probs - nn.one_hot(labels, 7)) / 6  # (p - y)/N identity

    def f():
        loss, _, _ = nn.softmax_cross_entropy(logits, labels)
        return loss

    g = numeric_grad(f, logits)
    assert rel_err(d, expected) < 1e-12
    assert rel_err(d, g) < 1e-4


def test_bce_with_logits_matches_finite_differences(rng):
    logits = rng.standard_normal(8)
    target = (rng.random(8) > 0.5).astype(np.float64)
    _, d = nn.bce_with_logits(logits, target)

    def f():
        loss, _ = nn.bce_with_logits(logits, target)
        return loss

    g = numeric_grad(f, logits)
    assert rel_err(d, g) < 1e-6


def test_softmax_rows_normalize(rng):
    logits = rng.standard_normal((100, 7)) * 20
    p = nn.softmax(logits)
    assert np.all(p >= 0)
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-6


def test_sigmoid_extremes():
    x = np.array([-1000.0, -10.0, 0.0, 10.0, 1000.0])
    y = nn.sigmoid(x)
    assert np.all((y > 0) & (y < 1))
    assert abs(y[2] - 0.5) < 1e-12


def test_he_init_variance(rng):
    # >= 1e4 draws: 32*16*25 = 12800 weights
    layer = nn.Conv2d(16, 32, 5, rng)
    fan_in = 16 * 25
    target = 2.0 / fan_in
    var = layer.W.value.var()
    assert 0.7 * target < var < 1.3 * target


def test_adam_first_step_is_signed_lr(rng):
    p = nn.Param(np.zeros(4))
    opt = nn.Adam([p], lr=0.01)
    p.grad[...] = np.array([1.0, -2.0, 3.0, -0.5])
    opt.step()
    # first Adam step moves each weight by ~lr against the gradient sign
    np.testing.assert_allclose(p.value, -0.01 * np.sign(p.grad), rtol=1e-6)


def test_adam_state_roundtrip(rng):
    p = nn.Param(rng.standard_normal(3))
    opt = nn.Adam([p], lr=0.01)
    for _ in range(3):
        p.grad[...] = rng.standard_normal(3)
        opt.step()
    saved = {name: arr.copy() for name, arr in opt.state_items()}
    p2 = nn.Param(p.value.copy())
    opt2 = nn.Adam([p2], lr=0.01)
    opt2.load_state_items(saved, "")
    g = rng.standard_normal(3)
    p.grad[...] = g
    p2.grad[...] = g
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(p.value, p2.value)


def test_state_dict_roundtrip(rng):
    net = nn.Sequential([nn.Dense(4, 3, rng), nn.BatchNorm(3, spatial=False)])
    sd = nn.state_dict(net)
    net2 = nn.Sequential([nn.Dense(4, 3, np.random.default_rng(99)), nn.BatchNorm(3, spatial=False)])
    assert nn.state_bytes(net) != nn.state_bytes(net2)
    nn.load_state_dict(net2, sd)
    assert nn.state_bytes(net) == nn.state_bytes(net2)
