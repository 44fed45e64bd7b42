"""Cross-module oracle suite: every derived example, checked end to end.

Called by `oracles.run_all` and the `selftest` CLI command. Each check pins
its tolerance first, measures, and reports an OracleOutcome; failures never
raise. `fast` trims the trial counts for smoke runs.
"""

from __future__ import annotations

import numpy as np

from . import oracles as orc
from .acquisition import extract_features, qbc_uncertainty, sketch
from .core import TimeAxis, make_grid
from .generators import sample_ic_params, sample_sim_inputs, transform_log
from .metrics import mae as metrics_mae
from .metrics import rmse as metrics_rmse
from .selection import (
    bait_default_lambda,
    select_bait,
    select_coreset,
    select_lcmd,
    select_random,
    select_sbal,
    select_topk,
)
from .solvers import solve_burgers_fields, solve_ce_fields, solve_ks_fields
from .surrogate import Ensemble, NormStats, SurrogateModel, grad_check
from .tasks import get_task

OracleOutcome = orc.OracleOutcome


def _ensemble(seed: int, n_params=1, hidden=12) -> Ensemble:
    ens = Ensemble.build(2, 1, n_params, hidden=hidden, seeds=[seed, seed + 1])
    for member in ens.members:
        member.norm = NormStats(np.ones(1), np.zeros(n_params), np.ones(n_params))
    return ens


def run(seed: int = 0, fast: bool = False) -> list[OracleOutcome]:
    out: list[OracleOutcome] = []
    add = out.append
    rng = np.random.default_rng(seed)
    n_stat = 20_000 if fast else 100_000
    n_inst = 50 if fast else 200
    n_pairs = 200 if fast else 1000

    # ------------------------------------------------------------- solvers
    grid_ce = make_grid(64, 16.0)
    x_ce = np.arange(64) / 64 * 16.0
    u0 = 0.3 * np.sin(2 * np.pi * x_ce / 16.0 + 0.4)
    fields, _ = solve_ce_fields(u0[None], [0.0], [1.0], [0.0], grid_ce, TimeAxis(501, 4.0))
    exact = orc.heat_mode_solution(0.3, 1, 0.4, 1.0, 16.0, 64, 4.0)
    rel = np.linalg.norm(fields[0, -1] - exact) / np.linalg.norm(exact)
    add(OracleOutcome("ce_heat_mode_analytic", rel <= 1e-6, rel, 1e-6, 64))

    xf = lambda n: np.arange(n) / n  # noqa: E731
    ref, _ = solve_burgers_fields(np.sin(2 * np.pi * xf(512))[None], [0.005],
                                  make_grid(512, 1.0), TimeAxis(5, 2.0))
    errs = {}
    for n_x in (128, 256):
        sol, _ = solve_burgers_fields(np.sin(2 * np.pi * xf(n_x))[None], [0.005],
                                      make_grid(n_x, 1.0), TimeAxis(5, 2.0))
        s = 512 // n_x
        errs[n_x] = np.linalg.norm(sol[0, -1] - ref[0, -1, ::s]) / np.linalg.norm(ref[0, -1, ::s])
    factor = errs[128] / errs[256]
    add(OracleOutcome("burgers_self_convergence_factor", factor >= 3.0, factor, 3.0, 2))

    ks_ic = np.zeros(512)
    gen = np.random.default_rng(seed + 1)
    for _ in range(10):
        ks_ic += gen.uniform(-1, 1) * np.sin(2 * np.pi * gen.integers(1, 10) * xf(512) + gen.uniform(0, 2 * np.pi))
    ks_fields, _ = solve_ks_fields(ks_ic[None], [1.0], [50.0], TimeAxis(801, 40.0))
    drift = np.abs(ks_fields[0].mean(axis=-1) - ks_ic.mean()).max() / (1 + abs(ks_ic.mean()))
    add(OracleOutcome("ks_mean_conservation", drift <= 1e-8, drift, 1e-8, 801))

    rates = orc.ks_linear_growth_rates(0.5, 4.0, 8)
    small_l, _ = solve_ks_fields(ks_ic[None], [4.0], [0.5], TimeAxis(11, 40.0))
    e_ratio = ((small_l[0, -1] - small_l[0, -1].mean()) ** 2).mean() / \
        max(((ks_ic - ks_ic.mean()) ** 2).mean(), 1e-300)
    decays = bool(np.all(rates < 0)) and e_ratio < 1e-6
    add(OracleOutcome("ks_linear_stability_decay", decays, e_ratio, 1e-6, 8))

    # ------------------------------------------------------------- gradients
    gc = grad_check(SurrogateModel(1, 3, hidden=8, seed=seed + 2), n_weights=200,
                    seed=seed + 3)
    add(OracleOutcome("gradient_vs_finite_differences", gc <= 1e-5, gc, 1e-5, 200))

    # ------------------------------------------------------------- qbc
    ens = _ensemble(seed + 4)
    ics = rng.standard_normal((6, 32, 1))
    vals = rng.random((6, 1))
    scores = qbc_uncertainty(ens, ics, vals, rollout_steps=7).scores
    preds = np.stack([m.rollout_batch(ics, vals, 7)[0] for m in ens.members])
    dense = orc.dense_qbc(preds, "variance")
    rel = np.abs(scores - dense).max() / np.abs(dense).max()
    add(OracleOutcome("qbc_dense_equivalence", rel <= 1e-12, rel, 1e-12, 6))

    half_sq = 0.25 * ((preds[0] - preds[1]) ** 2).mean(axis=(1, 2, 3))
    rel2 = np.abs(scores - half_sq).max() / np.abs(half_sq).max()
    add(OracleOutcome("qbc_two_member_identity", rel2 <= 1e-12, rel2, 1e-12, 6))

    # member reorder invariance (exact)
    flipped = qbc_uncertainty(Ensemble(list(reversed(ens.members))), ics, vals, 7).scores
    reorder = float(np.abs(scores - flipped).max())
    add(OracleOutcome("qbc_member_reorder_invariance", reorder == 0.0, reorder, 0.0, 6))

    # ------------------------------------------------------------- equivariance
    model = ens.evaluation_model
    ic = rng.standard_normal((32, 1))
    shift = 9
    p_ref, f_ref, _ = model.rollout(ic, np.array([0.5]), 40, collect="last")
    p_sh, f_sh, _ = model.rollout(np.roll(ic, shift, axis=0), np.array([0.5]), 40, collect="last")
    dev = max(np.abs(np.roll(p_ref, shift, axis=1) - p_sh).max(),
              np.abs(np.roll(f_ref, shift, axis=1) - f_sh).max())
    add(OracleOutcome("forward_rollout_shift_equivariance", dev <= 1e-8, dev, 1e-8, 40))

    both = qbc_uncertainty(ens, np.stack([ic, np.roll(ic, shift, axis=0)]),
                           np.array([[0.5], [0.5]]), 40).scores
    score_dev = abs(both[0] - both[1]) / max(both[0], 1e-300)
    add(OracleOutcome("qbc_shift_invariance", score_dev <= 1e-8, score_dev, 1e-8, 2))

    feats_mean, _ = extract_features(model, np.stack([ic, np.roll(ic, shift, axis=0)]),
                                     np.array([[0.5], [0.5]]), 40, "spatial_mean")
    mean_dev = np.abs(feats_mean[0] - feats_mean[1]).max()
    add(OracleOutcome("spatial_mean_feature_shift_invariance", mean_dev <= 1e-8,
                      mean_dev, 1e-8, feats_mean.shape[1]))

    feats_full, _ = extract_features(model, np.stack([ic, np.roll(ic, shift, axis=0)]),
                                     np.array([[0.5], [0.5]]), 10, "full")
    full_dev = np.abs(feats_full[0] - feats_full[1]).max()
    add(OracleOutcome("full_features_not_shift_invariant", full_dev > 1e-6,
                      full_dev, 1e-6, feats_full.shape[1]))

    # ------------------------------------------------------------- selection
    mismatch = {"topk": 0, "coreset": 0, "lcmd": 0, "bait": 0}
    worst_bait_rel = 0.0
    for inst in range(n_inst):
        r = np.random.default_rng(seed + 100 + inst)
        n = int(r.integers(8, 65))
        k = int(r.integers(1, 9))
        p = int(r.integers(2, 9))
        scores_i = r.random(n)
        if np.any(orc.brute_topk(scores_i, k) != select_topk(scores_i, k).indices):
            mismatch["topk"] += 1
        pool = r.standard_normal((n, p))
        anchors = r.standard_normal((int(r.integers(1, 9)), p))
        if np.any(orc.brute_coreset(pool, anchors, k) != select_coreset(pool, anchors, k).indices):
            mismatch["coreset"] += 1
        if np.any(orc.brute_lcmd(pool, anchors, k) != select_lcmd(pool, anchors, k).indices):
            mismatch["lcmd"] += 1
        train = r.standard_normal((int(r.integers(0, 6)), p))
        lam = bait_default_lambda(pool)
        res = select_bait(pool, train, k, lam)
        brute_idx, brute_trace = orc.brute_bait(pool, train, k, lam)
        if np.any(brute_idx != res.indices):
            mismatch["bait"] += 1
        dense_trace = [orc.bait_objective_dense(pool, list(train) + [pool[j] for j in res.indices[:i]], lam)
                       for i in range(k + 1)]
        rel = np.max(np.abs(np.array(res.diagnostics["objective_trace"]) - np.array(dense_trace))
                     / np.maximum(np.abs(dense_trace), 1e-300))
        worst_bait_rel = max(worst_bait_rel, rel)
    for name, bad in mismatch.items():
        add(OracleOutcome(f"{name}_matches_brute_force", bad == 0, bad, 0, n_inst))
    add(OracleOutcome("bait_rank1_vs_dense_objective", worst_bait_rel <= 1e-8,
                      worst_bait_rel, 1e-8, n_inst))

    # ------------------------------------------------------------- sbal statistics
    pool_n = 32
    base_scores = np.random.default_rng(seed + 5).random(pool_n) + 0.05
    counts_m0 = np.zeros(pool_n)
    counts_rand = np.zeros(pool_n)
    for t in range(n_stat):
        counts_m0[select_sbal(base_scores, 1, 0.0, seed + t).indices[0]] += 1
        counts_rand[select_random(pool_n, 1, seed + 7_000_000 + t).indices[0]] += 1
    p_chi = orc.chi_square_uniform_pvalue(counts_m0)
    add(OracleOutcome("sbal_m0_uniform_chi_square", p_chi >= 0.01, p_chi, 0.01, n_stat))
    from scipy.stats import chi2_contingency
    p_two = float(chi2_contingency(np.stack([counts_m0, counts_rand])).pvalue)
    add(OracleOutcome("sbal_m0_vs_random_chi_square", p_two >= 0.01, p_two, 0.01, n_stat))

    # fewer cells in fast mode keep the multinomial noise floor below the bound
    scale_n = 8 if fast else pool_n
    scale_scores = base_scores[:scale_n]
    counts_a = np.zeros(scale_n)
    counts_b = np.zeros(scale_n)
    for t in range(n_stat):
        counts_a[select_sbal(scale_scores, 1, 1.0, seed + 3_000_000 + t).indices[0]] += 1
        counts_b[select_sbal(scale_scores * 37.5, 1, 1.0, seed + 5_000_000 + t).indices[0]] += 1
    kl = orc.empirical_kl(counts_a, counts_b)
    add(OracleOutcome("sbal_scale_invariance_kl", kl <= 1e-3, kl, 1e-3, n_stat))

    n_limit = 50 if fast else 200
    limit_bad = 0
    for t in range(n_limit):
        s = np.random.default_rng(seed + 200 + t).random(40)
        if np.any(select_sbal(s, 6, 1e3, seed + t).indices != select_topk(s, 6).indices):
            limit_bad += 1
    add(OracleOutcome("sbal_infinite_limit_is_topk", limit_bad == 0, limit_bad, 0, n_limit))

    # ------------------------------------------------------------- sketch
    raw = np.random.default_rng(seed + 6).standard_normal((128, 4096))
    sk = sketch(raw, 256, seed + 7).matrix
    ratios = orc.jl_distance_ratios(raw, sk, n_pairs, seed + 8)
    frac = float(np.mean((ratios >= 0.7) & (ratios <= 1.3)))
    add(OracleOutcome("sketch_jl_distance_preservation", frac >= 0.99, frac, 0.99, n_pairs))

    v1 = np.random.default_rng(seed + 9).standard_normal((2, 64))
    u_mat = np.random.default_rng(seed + 10).standard_normal((16, 64))
    lin_left = sketch(2.5 * v1[0:1] - 1.5 * v1[1:2], 16, None, matrix=u_mat).matrix
    lin_right = 2.5 * sketch(v1[0:1], 16, None, matrix=u_mat).matrix \
        - 1.5 * sketch(v1[1:2], 16, None, matrix=u_mat).matrix
    lin_dev = float(np.abs(lin_left - lin_right).max())
    add(OracleOutcome("sketch_linearity", lin_dev <= 1e-12, lin_dev, 1e-12, 64))

    # ------------------------------------------------------------- generators
    med = np.median(transform_log(np.random.default_rng(seed + 11).random(n_stat), 0.001, 1.0))
    ok = 0.028 <= med <= 0.036
    add(OracleOutcome("log_uniform_median", ok, float(med), 0.036, n_stat))

    burgers_ics = sample_ic_params(10_000, get_task("burgers").ic_spec, seed=seed + 12)
    frac_win = float(np.mean([ic.window_flag for ic in burgers_ics]))
    add(OracleOutcome("windowed_fraction_binomial", abs(frac_win - 0.1) <= 0.01,
                      frac_win, 0.01, 10_000))

    from .selection import select_lhs
    task = get_task("ce")
    res = select_lhs(16, task.param_spec, task.ic_spec, task.train_grid(), seed=seed + 13)
    normed = np.stack([np.concatenate([inp.pde_params.normed, inp.ic_params.normed])
                       for inp in res.inputs])
    sup = orc.stratification_sup_norm(normed)
    add(OracleOutcome("lhs_stratification_sup_norm", sup <= 1.0 / 16 + 1e-12, sup, 1.0 / 16, 16))

    # ------------------------------------------------------------- metrics
    pred = np.random.default_rng(seed + 14).standard_normal((2, 3, 4, 1))
    truth = np.random.default_rng(seed + 15).standard_normal((2, 3, 4, 1))
    r_fast, per_fast = metrics_rmse(pred, truth)
    r_dense, per_dense = orc.dense_rmse(pred, truth)
    m_fast, _ = metrics_mae(pred, truth)
    m_dense, _ = orc.dense_mae(pred, truth)
    dev = max(abs(r_fast - r_dense), abs(m_fast - m_dense),
              float(np.abs(per_fast - per_dense).max()))
    add(OracleOutcome("metrics_dense_loop_equivalence", dev <= 1e-14, dev, 1e-14, pred.size))

    return out
