import numpy as np
import pytest

from pdepool.surrogate import (
    Ensemble,
    NormStats,
    SurrogateModel,
    TrainConfig,
    TrainingDiverged,
    fit_norm_stats,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)


def simple_model(n_c=1, n_params=2, hidden=8, seed=0):
    m = SurrogateModel(n_c, n_params, hidden=hidden, seed=seed)
    m.norm = NormStats(np.ones(n_c), np.zeros(n_params), np.ones(n_params))
    return m


def test_grad_check_fresh_model():
    m = SurrogateModel(1, 3, hidden=8, seed=1)
    assert grad_check(m, n_weights=250, seed=2) <= 1e-5


def test_grad_check_zero_weights_zero_input():
    m = simple_model(seed=3)
    for p in m.net.params:
        p[...] = 0.0
    rng = np.random.default_rng(5)
    u_seq = np.zeros((2, 3, 16, 1))
    u_seq[:, 1:] = rng.standard_normal((2, 2, 16, 1))
    assert grad_check(m, u_seq, np.zeros((2, 2)), n_weights=250, seed=7) <= 1e-5


def test_residual_identity_zero_final_layer():
    m = simple_model(seed=4)
    m.net.params[6][...] = 0.0
    m.net.params[7][...] = 0.0
    rng = np.random.default_rng(1)
    ic = rng.standard_normal((16, 1))
    nxt, _ = m.forward(ic, np.array([0.5, 0.5]))
    np.testing.assert_array_equal(nxt, ic)
    preds, _, failed = m.rollout(ic, np.array([0.5, 0.5]), 40)
    assert not failed
    for t in range(41):
        np.testing.assert_array_equal(preds[t], ic)


def test_rollout_zero_steps_is_ic():
    m = simple_model(seed=6)
    ic = np.random.default_rng(0).standard_normal((16, 1))
    preds, _, failed = m.rollout(ic, np.array([0.1, 0.2]), 0)
    assert preds.shape == (1, 16, 1)
    np.testing.assert_array_equal(preds[0], ic)


def test_identical_weights_identical_outputs():
    a = simple_model(seed=8)
    b = simple_model(seed=9)
    b.net.set_params(a.net.params)
    ic = np.random.default_rng(2).standard_normal((16, 1))
    pa, _, _ = a.rollout(ic, np.array([0.3, 0.4]), 5)
    pb, _, _ = b.rollout(ic, np.array([0.3, 0.4]), 5)
    np.testing.assert_array_equal(pa, pb)


def test_forward_and_rollout_shift_equivariance():
    m = simple_model(n_params=1, hidden=16, seed=10)
    rng = np.random.default_rng(3)
    ic = rng.standard_normal((32, 1))
    shift = 7
    p_ref, f_ref, _ = m.rollout(ic, np.array([0.5]), 40, collect="last")
    p_sh, f_sh, _ = m.rollout(np.roll(ic, shift, axis=0), np.array([0.5]), 40, collect="last")
    assert np.abs(np.roll(p_ref, shift, axis=1) - p_sh).max() <= 1e-8
    assert np.abs(np.roll(f_ref, shift, axis=1) - f_sh).max() <= 1e-8


def test_constant_trajectories_learned_fast():
    # residual head must learn the zero map on constant data
    rng = np.random.default_rng(4)
    consts = rng.uniform(-1, 1, size=8)
    data = np.broadcast_to(consts[:, None, None, None], (8, 6, 16, 1)).copy()
    vals = rng.random((8, 1))
    m = SurrogateModel(1, 1, hidden=8, seed=11)
    m.norm = NormStats(np.array([data.std()]), np.zeros(1), np.ones(1))
    cfg = TrainConfig(epochs=50, batch_size=8, windows_per_traj=8, seed=12)
    m.train(data, vals, cfg)
    assert m.history[-1] <= 1e-4


def test_epochs_zero_returns_unchanged():
    m = simple_model(seed=13)
    before = m.net.copy_params()
    m.train(np.zeros((2, 3, 16, 1)) + 1.0, np.zeros((2, 2)), TrainConfig(epochs=0))
    for a, b in zip(before, m.net.params):
        np.testing.assert_array_equal(a, b)


def test_training_determinism_bit_identical():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((6, 8, 16, 1))
    vals = rng.random((6, 2))
    results = []
    for _ in range(2):
        m = simple_model(seed=14)
        m.train(data, vals, TrainConfig(epochs=10, batch_size=4, seed=15))
        results.append(m.net.copy_params())
    for a, b in zip(*results):
        np.testing.assert_array_equal(a, b)


def test_training_loss_decreases():
    rng = np.random.default_rng(6)
    # smooth, learnable dynamics: decaying sine fields
    x = np.arange(24) / 24
    t = np.arange(8)[:, None]
    data = np.stack([np.exp(-0.05 * t * (k + 1)) * np.sin(2 * np.pi * k * x + p)
                     for k, p in zip([1, 2, 1, 3, 2, 1], rng.uniform(0, 6, 6))])[..., None]
    vals = rng.random((6, 1))
    m = SurrogateModel(1, 1, hidden=16, seed=16)
    m.norm = fit_norm_stats(data, np.zeros(1), np.ones(1))
    m.train(data, vals, TrainConfig(epochs=100, batch_size=6, windows_per_traj=4, seed=17))
    hist = np.array(m.history)
    assert np.median(hist[-10:]) <= 0.5 * np.median(hist[:10])


def test_divergence_aborts():
    rng = np.random.default_rng(7)
    data = rng.standard_normal((4, 4, 16, 1)) * 5
    vals = rng.random((4, 1))
    m = SurrogateModel(1, 1, hidden=8, seed=18)
    m.norm = NormStats(np.ones(1) * 1e-6, np.zeros(1), np.ones(1))  # pathological norm
    cfg = TrainConfig(epochs=400, batch_size=4, lr_max=5.0, lr_min=5.0,
                      clip_warmup_epochs=400, seed=19)
    with pytest.raises(TrainingDiverged):
        m.train(data, vals, cfg)


def test_fit_norm_stats():
    data = np.array([-1.0, 1.0, -1.0, 1.0]).reshape(1, 4, 1, 1)
    stats = fit_norm_stats(data, np.zeros(1), np.ones(1))
    assert stats.sigma[0] == pytest.approx(1.0)
    scaled = fit_norm_stats(3 * data, np.zeros(1), np.ones(1))
    assert scaled.sigma[0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        fit_norm_stats(np.zeros((2, 3, 4, 1)), np.zeros(1), np.ones(1))


def test_fit_norm_stats_matches_two_pass_reference():
    rng = np.random.default_rng(8)
    data = rng.standard_normal((64, 5, 32, 1)) * 1.7 + 0.3
    sigma = fit_norm_stats(data, np.zeros(1), np.ones(1)).sigma[0]
    flat = data.reshape(-1)
    mean = flat.sum() / flat.size          # pass one
    var = ((flat - mean) ** 2).sum() / flat.size  # pass two
    assert abs(sigma - np.sqrt(var)) <= 0.02 * sigma


def test_cond_normed_unit_range():
    stats = NormStats(np.ones(1), np.array([0.0, 1.0]), np.array([2.0, 5.0]))
    np.testing.assert_allclose(stats.cond_normed(np.array([[1.0, 3.0]])), [[0.5, 0.5]])


def test_rollout_flags_nonfinite():
    m = simple_model(seed=20)
    m.net.params[6][...] = 0.0
    m.net.params[7][...] = np.nan  # poisoned head: first step already non-finite
    ic = np.ones((16, 1))
    preds, _, failed = m.rollout(ic, np.array([0.5, 0.5]), 5)
    assert failed
    np.testing.assert_array_equal(preds[0], ic)
    assert np.all(preds[1:] == 0.0)  # frames after the failure stay zero


def test_rollout_batch_isolates_failures():
    m = simple_model(seed=22)
    good = np.random.default_rng(9).standard_normal((16, 1))
    ics = np.stack([good, good * np.nan])
    preds, _, failed = m.rollout_batch(ics, np.array([[0.5, 0.5]] * 2), 4)
    assert not failed[0] and failed[1]
    solo, _, _ = m.rollout(good, np.array([0.5, 0.5]), 4)
    np.testing.assert_array_equal(preds[0], solo)


def test_ensemble_build_and_eval_member():
    ens = Ensemble.build(2, 1, 3, hidden=8, seeds=[1, 2])
    assert ens.n_members == 2
    assert ens.evaluation_model is ens.members[0]
    with pytest.raises(ValueError):
        Ensemble.build(2, 1, 3, hidden=8, seeds=[1])
    # members differ only by init seed
    assert any(np.any(a != b) for a, b in zip(ens.members[0].net.params,
                                              ens.members[1].net.params))


def test_checkpoint_roundtrip(tmp_path):
    m = simple_model(seed=21)
    m.epochs_trained = 7
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    for a, b in zip(m.net.params, back.net.params):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.norm.sigma, m.norm.sigma)
    assert back.epochs_trained == 7
    ic = np.random.default_rng(1).standard_normal((16, 1))
    pa, _, _ = m.rollout(ic, np.array([0.5, 0.5]), 3)
    pb, _, _ = back.rollout(ic, np.array([0.5, 0.5]), 3)
    np.testing.assert_array_equal(pa, pb)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_checkpoint(str(path))
