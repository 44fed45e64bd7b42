import numpy as np
import pytest

from pdepool.acquisition import extract_features, qbc_uncertainty, sketch
from pdepool.oracles import dense_qbc
from pdepool.surrogate import Ensemble, NormStats, SurrogateModel


def make_ensemble(seeds=(1, 2), hidden=8, n_params=1):
    ens = Ensemble.build(len(seeds), 1, n_params, hidden=hidden, seeds=list(seeds))
    for m in ens.members:
        m.norm = NormStats(np.ones(1), np.zeros(n_params), np.ones(n_params))
    return ens


def test_identical_members_score_zero():
    ens = make_ensemble()
    ens.members[1].net.set_params(ens.members[0].net.params)
    ics = np.random.default_rng(0).standard_normal((4, 16, 1))
    res = qbc_uncertainty(ens, ics, np.full((4, 1), 0.5), rollout_steps=6)
    np.testing.assert_array_equal(res.scores, np.zeros(4))


def test_two_member_quarter_identity():
    ens = make_ensemble()
    rng = np.random.default_rng(1)
    ics = rng.standard_normal((5, 16, 1))
    vals = rng.random((5, 1))
    res = qbc_uncertainty(ens, ics, vals, rollout_steps=8)
    p0, _, _ = ens.members[0].rollout_batch(ics, vals, 8)
    p1, _, _ = ens.members[1].rollout_batch(ics, vals, 8)
    quarter = 0.25 * ((p0 - p1) ** 2).mean(axis=(1, 2, 3))
    np.testing.assert_allclose(res.scores, quarter, rtol=1e-12)


def test_matches_dense_definition_and_absolute_metric():
    ens = make_ensemble(seeds=(3, 4, 5))
    rng = np.random.default_rng(2)
    ics = rng.standard_normal((3, 16, 1))
    vals = rng.random((3, 1))
    preds = np.stack([m.rollout_batch(ics, vals, 5)[0] for m in ens.members])
    for metric in ("variance", "absolute"):
        res = qbc_uncertainty(ens, ics, vals, 5, metric=metric)
        dense = dense_qbc(preds, metric)
        np.testing.assert_allclose(res.scores, dense, rtol=1e-12)


def test_score_shift_invariance():
    ens = make_ensemble(hidden=12)
    rng = np.random.default_rng(3)
    ic = rng.standard_normal((32, 1))
    ics = np.stack([ic, np.roll(ic, 11, axis=0)])
    res = qbc_uncertainty(ens, ics, np.full((2, 1), 0.3), rollout_steps=20)
    assert abs(res.scores[0] - res.scores[1]) <= 1e-8 * max(res.scores[0], 1e-300)


def test_failed_rollouts_masked_not_scored():
    ens = make_ensemble()
    good = np.random.default_rng(4).standard_normal((16, 1))
    ics = np.stack([good, np.full((16, 1), np.nan)])
    res = qbc_uncertainty(ens, ics, np.full((2, 1), 0.5), rollout_steps=4)
    assert not res.failed[0] and res.failed[1]
    assert res.scores[1] == 0.0


def test_chunking_does_not_change_scores():
    ens = make_ensemble()
    rng = np.random.default_rng(5)
    ics = rng.standard_normal((7, 16, 1))
    vals = rng.random((7, 1))
    a = qbc_uncertainty(ens, ics, vals, 6, chunk=200).scores
    b = qbc_uncertainty(ens, ics, vals, 6, chunk=3).scores
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=0)


def test_single_member_rejected():
    ens = Ensemble.build(1, 1, 1, hidden=8, seeds=[1])
    ens.members[0].norm = NormStats(np.ones(1), np.zeros(1), np.ones(1))
    with pytest.raises(ValueError):
        qbc_uncertainty(ens, np.zeros((1, 16, 1)), np.zeros((1, 1)), 3)


def test_feature_shapes_all_aggregations():
    model = SurrogateModel(1, 1, hidden=8, seed=7)
    model.norm = NormStats(np.ones(1), np.zeros(1), np.ones(1))
    ics = np.random.default_rng(6).standard_normal((3, 16, 1))
    vals = np.full((3, 1), 0.5)
    steps = 4
    f_mean, _ = extract_features(model, ics, vals, steps, "spatial_mean")
    assert f_mean.shape == (3, 8 * steps)
    f_full, _ = extract_features(model, ics, vals, steps, "full")
    assert f_full.shape == (3, 16 * 8 * steps)
    f_mid, _ = extract_features(model, ics, vals, steps, "mid_layer")
    assert f_mid.shape == (3, 16 * 8 * steps)
    f_mid_mean, _ = extract_features(model, ics, vals, steps, "mid_layer_mean")
    assert f_mid_mean.shape == (3, 8 * steps)
    with pytest.raises(ValueError):
        extract_features(model, ics, vals, steps, "bogus")


def test_constant_ic_frozen_model_features_constant_over_steps():
    model = SurrogateModel(1, 1, hidden=8, seed=8)
    model.norm = NormStats(np.ones(1), np.zeros(1), np.ones(1))
    model.net.params[6][...] = 0.0
    model.net.params[7][...] = 0.0
    ics = np.full((1, 16, 1), 0.7)
    f, _ = extract_features(model, ics, np.full((1, 1), 0.5), 5, "spatial_mean")
    per_step = f.reshape(5, 8)
    for t in range(1, 5):
        np.testing.assert_array_equal(per_step[t], per_step[0])


def test_spatial_mean_features_shift_invariant_full_not():
    model = SurrogateModel(1, 1, hidden=8, seed=9)
    model.norm = NormStats(np.ones(1), np.zeros(1), np.ones(1))
    ic = np.random.default_rng(7).standard_normal((32, 1))
    ics = np.stack([ic, np.roll(ic, 5, axis=0)])
    vals = np.full((2, 1), 0.5)
    f_mean, _ = extract_features(model, ics, vals, 10, "spatial_mean")
    assert np.abs(f_mean[0] - f_mean[1]).max() <= 1e-8
    f_full, _ = extract_features(model, ics, vals, 10, "full")
    assert np.abs(f_full[0] - f_full[1]).max() > 1e-6


def test_sketch_zero_identity_and_linearity():
    zero = sketch(np.zeros((2, 10)), 4, seed=0)
    np.testing.assert_array_equal(zero.matrix, np.zeros((2, 4)))

    eye = sketch(np.arange(12.0).reshape(2, 6), 6, None, matrix=np.sqrt(6) * np.eye(6))
    np.testing.assert_allclose(eye.matrix, np.arange(12.0).reshape(2, 6), rtol=1e-15)

    rng = np.random.default_rng(8)
    u = rng.standard_normal((4, 20))
    a, b = rng.standard_normal((1, 20)), rng.standard_normal((1, 20))
    lhs = sketch(2.0 * a + 3.0 * b, 4, None, matrix=u).matrix
    rhs = 2.0 * sketch(a, 4, None, matrix=u).matrix + 3.0 * sketch(b, 4, None, matrix=u).matrix
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_sketch_same_seed_same_matrix():
    raw = np.random.default_rng(9).standard_normal((3, 50))
    a = sketch(raw, 8, seed=42).matrix
    b = sketch(raw, 8, seed=42).matrix
    np.testing.assert_array_equal(a, b)
    c = sketch(raw, 8, seed=43).matrix
    assert np.any(a != c)
