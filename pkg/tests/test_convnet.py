import numpy as np
import pytest

from pdepool.convnet import Adam, ConvNet, cosine_lr, gelu, gelu_grad, global_norm


def naive_circular_conv(x, w, bias):
    # direct-summation oracle, no shared code with the implementation
    b, n_x, c_in = x.shape
    k, _, c_out = w.shape
    half = k // 2
    y = np.zeros((b, n_x, c_out))
    for i in range(n_x):
        for kk in range(k):
            y[:, i] += x[:, (i + kk - half) % n_x] @ w[kk]
    return y + bias


def net_forward_copy(net, x, slot=0, need_cache=False):
    y, feats, mid = net.forward(x, slot=slot, need_cache=need_cache)
    return y.copy(), feats.copy(), mid.copy()


def test_forward_matches_naive_conv_stack():
    rng = np.random.default_rng(0)
    net = ConvNet(3, 7, 2, seed=1)
    x = rng.standard_normal((4, 12, 3))
    y, feats, mid = net_forward_copy(net, x)
    h = x
    for layer in range(4):
        z = naive_circular_conv(h, net.params[2 * layer], net.params[2 * layer + 1])
        h = gelu(z) if layer < 3 else z
        if layer == 1:
            np.testing.assert_allclose(mid, gelu(z), atol=1e-12)
        if layer == 2:
            np.testing.assert_allclose(feats, gelu(z), atol=1e-12)
    np.testing.assert_allclose(y, h, atol=1e-12)


def test_gelu_derivative_matches_fd():
    zs = np.linspace(-4, 4, 41)
    h = 1e-6
    fd = (gelu(zs + h) - gelu(zs - h)) / (2 * h)
    assert np.abs(gelu_grad(zs) - fd).max() <= 1e-7


def test_backward_matches_fd_on_all_param_kinds():
    rng = np.random.default_rng(3)
    net = ConvNet(2, 5, 1, seed=2)
    x = rng.standard_normal((2, 10, 2))
    dy_seed = rng.standard_normal((2, 10, 1))

    def loss(n):
        y, _, _ = n.forward(x, slot=0, need_cache=False)
        return float(np.sum(y * dy_seed))

    net.zero_grads()
    net.forward(x, slot=0, need_cache=True)
    net.backward(0, dy_seed)
    h = 1e-6
    for p_idx in range(len(net.params)):
        for flat in range(0, net.params[p_idx].size, max(1, net.params[p_idx].size // 7)):
            orig = net.params[p_idx].flat[flat]
            net.params[p_idx].flat[flat] = orig + h
            lp = loss(net)
            net.params[p_idx].flat[flat] = orig - h
            lm = loss(net)
            net.params[p_idx].flat[flat] = orig
            fd = (lp - lm) / (2 * h)
            an = net.grad_bufs[p_idx].flat[flat]
            assert abs(an - fd) <= 1e-6 * max(1.0, abs(fd)), (p_idx, flat)


def test_backward_input_gradient_matches_fd():
    rng = np.random.default_rng(4)
    net = ConvNet(2, 4, 2, seed=5)
    x = rng.standard_normal((1, 8, 2))
    w_lin = rng.standard_normal((1, 8, 2))

    def loss(xx):
        y, _, _ = net.forward(xx, slot=0, need_cache=False)
        return float(np.sum(y * w_lin))

    net.zero_grads()
    net.forward(x, slot=0, need_cache=True)
    dx = net.backward(0, w_lin).copy()
    h = 1e-6
    for flat in range(x.size):
        xp = x.copy(); xp.flat[flat] += h
        xm = x.copy(); xm.flat[flat] -= h
        fd = (loss(xp) - loss(xm)) / (2 * h)
        assert abs(dx.flat[flat] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_translation_equivariance_exact():
    rng = np.random.default_rng(6)
    net = ConvNet(1, 9, 1, seed=7)
    x = rng.standard_normal((2, 16, 1))
    y, feats, _ = net_forward_copy(net, x)
    ys, fs, _ = net_forward_copy(net, np.roll(x, 3, axis=1))
    np.testing.assert_array_equal(np.roll(y, 3, axis=1), ys)
    np.testing.assert_array_equal(np.roll(feats, 3, axis=1), fs)


def test_pool_reuse_between_batch_sizes():
    rng = np.random.default_rng(8)
    net = ConvNet(1, 4, 1, seed=9)
    a = rng.standard_normal((5, 12, 1))
    b = rng.standard_normal((2, 12, 1))
    ya1, _, _ = net_forward_copy(net, a)
    yb, _, _ = net_forward_copy(net, b)
    ya2, _, _ = net_forward_copy(net, a)
    np.testing.assert_array_equal(ya1, ya2)
    fresh = ConvNet(1, 4, 1, seed=9)
    yb2, _, _ = net_forward_copy(fresh, b)
    np.testing.assert_array_equal(yb, yb2)


def test_two_step_cache_slots_do_not_collide():
    rng = np.random.default_rng(10)
    net = ConvNet(1, 4, 1, seed=11)
    x0 = rng.standard_normal((3, 8, 1))
    x1 = rng.standard_normal((3, 8, 1))
    y0, _, _ = net_forward_copy(net, x0, slot=0, need_cache=True)
    y1, _, _ = net_forward_copy(net, x1, slot=1, need_cache=True)
    # backward on slot 0 must still see slot-0 caches
    net.zero_grads()
    dy = np.ones((3, 8, 1))
    net.backward(0, dy)
    g_two_slots = [g.copy() for g in net.grad_bufs]
    net.zero_grads()
    net.forward(x0, slot=0, need_cache=True)
    net.backward(0, dy)
    for ga, gb in zip(g_two_slots, net.grad_bufs):
        np.testing.assert_array_equal(ga, gb)


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 100, 1e-3, 1e-5) == pytest.approx(1e-3)
    assert cosine_lr(99, 100, 1e-3, 1e-5) == pytest.approx(1e-5)
    mid = cosine_lr(50, 101, 1e-3, 1e-5)
    assert mid == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-9)


def test_adam_moves_toward_minimum():
    params = [np.array([4.0])]
    opt = Adam(params)
    for _ in range(400):
        opt.step(params, [2.0 * params[0]], lr=0.05)  # d/dx x^2
    assert abs(params[0][0]) < 1e-2


def test_global_norm():
    assert global_norm([np.array([3.0]), np.array([4.0])]) == pytest.approx(5.0)
