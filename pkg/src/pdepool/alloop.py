"""The pool-based active-learning cycle.

One run: sample a candidate pool and a test set from the input distribution
(disjoint uid streams), solve a random initial batch, then iterate retrain ->
evaluate -> score -> select -> solve -> augment under the exponential data
schedule. Ensembles are retrained from scratch every round; the first member
is the evaluation model. Each round's state (training set, consumed
candidates, report so far) is checkpointed atomically, and a run can resume
from the last completed round with bit-identical remaining selections: all
randomness is derived statelessly from (seeds, round).
"""

from __future__ import annotations

import os
import time

import numpy as np

from .acquisition import extract_features, qbc_uncertainty, sketch
from .config import ExperimentConfig, TraineeConfig
from .core import SimInput, TrajectoryBatch
from .dataio import load_dataset, read_json, save_dataset, write_json_atomic
from .generators import UID_POOL, UID_TEST, sample_sim_inputs
from .metrics import MetricsReport, evaluate_predictions
from .selection import (
    select_bait,
    select_coreset,
    select_lcmd,
    select_lhs,
    select_random,
    select_sbal,
    select_topk,
)
from .solvers import SolverConfig, solve_batch
from .surrogate import Ensemble, SurrogateModel, TrainConfig, fit_norm_stats
from .tasks import TaskSpec, get_task

REPORT_SCHEMA_VERSION = 1
_UID_DESIGN_ROUND_STRIDE = 1 << 20


class PoolState:
    """Candidate pool with consumed/failed bookkeeping.

    Consumed candidates (selected in any earlier round) are never rescored or
    reselected; solver-failed candidates are retired permanently.
    """

    def __init__(self, inputs: list[SimInput]):
        self.inputs = inputs
        self.ics = np.stack([i.initial_field for i in inputs]) if inputs else np.zeros((0, 1, 1))
        self.pde_values = np.array([i.pde_params.values for i in inputs])
        self.consumed = np.zeros(len(inputs), dtype=bool)
        self.failed = np.zeros(len(inputs), dtype=bool)
        self._uid_to_idx = {i.uid: j for j, i in enumerate(inputs)}

    def eligible_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.consumed & ~self.failed)

    def consume(self, indices) -> None:
        self.consumed[np.asarray(indices, dtype=np.int64)] = True

    def mark_failed(self, indices) -> None:
        self.failed[np.asarray(indices, dtype=np.int64)] = True

    def consume_uids(self, uids) -> None:
        self.consume([self._uid_to_idx[u] for u in uids if u in self._uid_to_idx])


def _train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(epochs=t.epochs, batch_size=t.batch_size, lr_max=t.lr_max,
                       lr_min=t.lr_min, subtraj_steps=t.subtraj_steps,
                       windows_per_traj=t.windows_per_traj, clip_factor=t.clip_factor,
                       clip_warmup_epochs=t.clip_warmup_epochs,
                       clip_ema_decay=t.clip_ema_decay, seed=seed)


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(cfl_safety=s.cfl_safety, max_substeps=s.max_substeps,
                        ks_etdrk4_contour_points=s.ks_etdrk4_contour_points,
                        dealias=s.dealias)


def _member_seed(train_seed: int, round_idx: int, member: int) -> int:
    return (train_seed * 1_000_003 + round_idx) * 101 + member


def _train_ensemble(cfg: ExperimentConfig, task: TaskSpec, round_idx: int,
                    data: np.ndarray, pde_values: np.ndarray) -> Ensemble:
    seeds = [_member_seed(cfg.seeds.train, round_idx, m)
             for m in range(cfg.model.ensemble_size)]
    ens = Ensemble.build(cfg.model.ensemble_size, n_c=data.shape[-1],
                         n_params=task.param_spec.n_dims, hidden=cfg.model.hidden,
                         seeds=seeds, residual_scale=cfg.model.residual_scale)
    norm = fit_norm_stats(data, np.array(task.param_spec.lows),
                          np.array(task.param_spec.highs))
    for m, member in enumerate(ens.members):
        member.norm = norm
        member.train(data, pde_values, _train_config(cfg, seed=seeds[m]))
    return ens


def _train_trainee(cfg: ExperimentConfig, task: TaskSpec, round_idx: int,
                   data: np.ndarray, pde_values: np.ndarray) -> SurrogateModel:
    # same derivation as ensemble member 0: a trainee configured identically
    # to the evaluation model reproduces its curve exactly
    tr: TraineeConfig = cfg.trainee
    seed = _member_seed(tr.seed, round_idx, 0)
    model = SurrogateModel(n_c=data.shape[-1], n_params=task.param_spec.n_dims,
                           hidden=tr.hidden, residual_scale=cfg.model.residual_scale,
                           seed=seed)
    model.norm = fit_norm_stats(data, np.array(task.param_spec.lows),
                                np.array(task.param_spec.highs))
    model.train(data, pde_values, _train_config(cfg, seed=seed))
    return model


def evaluate(model: SurrogateModel, test_truth: TrajectoryBatch,
             ensemble: Ensemble | None = None, chunk: int = 200) -> MetricsReport:
    """Full-rollout test error of the model; adds uncertainty-error correlation
    when an ensemble with at least two members is supplied."""
    ics = test_truth.data[:, 0]
    # conditioning values are carried alongside the truth tensor
    pde_values = test_truth.pde_values  # type: ignore[attr-defined]
    n_steps = test_truth.time.n_t - 1
    preds = np.zeros_like(test_truth.data)
    for lo in range(0, ics.shape[0], chunk):
        sl = slice(lo, min(lo + chunk, ics.shape[0]))
        p, _, _ = model.rollout_batch(ics[sl], pde_values[sl], n_steps)
        preds[sl] = p
    unc = None
    if ensemble is not None and ensemble.n_members >= 2:
        unc = qbc_uncertainty(ensemble, ics, pde_values, n_steps, chunk=chunk).scores
    return evaluate_predictions(preds, test_truth.data, unc)


def _attach_values(traj: TrajectoryBatch, inputs: list[SimInput]) -> TrajectoryBatch:
    values = np.array([i.pde_params.values for i in inputs]) if inputs else np.zeros((0, 0))
    object.__setattr__(traj, "pde_values", values)
    return traj


def solve_test_set(config: ExperimentConfig, cache_dir: str | None = None):
    """Solve (or load) the shared test set for (task, test seed, size)."""
    task = get_task(config.task)
    inputs = sample_sim_inputs(config.test_size, task.param_spec, task.ic_spec,
                               task.train_grid(), seed=config.seeds.test,
                               uid_offset=UID_TEST)
    cache_path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(
            cache_dir, f"test-{config.task}-s{config.seeds.test}-n{config.test_size}.bin")
        if os.path.exists(cache_path):
            traj, cached_inputs = load_dataset(cache_path)
            return _attach_values(traj, cached_inputs), cached_inputs
    traj, failed = solve_batch(task, inputs, _solver_config(config))
    if failed.any():
        keep = ~failed
        traj = TrajectoryBatch(traj.data[keep], traj.grid, traj.time)
        inputs = [i for i, ok in zip(inputs, keep) if ok]
    # pass through the float32 interchange narrowing either way, so cached and
    # uncached runs evaluate against identical data
    traj = TrajectoryBatch(traj.data.astype("<f4").astype(np.float64), traj.grid, traj.time)
    if cache_path is not None:
        save_dataset(traj, inputs, cache_path)
    return _attach_values(traj, inputs), inputs


def _select_batch(config: ExperimentConfig, task: TaskSpec, round_idx: int,
                  ensemble: Ensemble, pool: PoolState, k: int,
                  train_inputs: list[SimInput], train_data: np.ndarray):
    """Returns (new_inputs, selection_record). Masks failed rollouts."""
    strat = config.strategy
    n_steps = task.train_nt - 1
    eligible = pool.eligible_indices()
    record = {"strategy": strat.name, "requested": int(k)}
    if strat.name == "lhs":
        res = select_lhs(k, task.param_spec, task.ic_spec, task.train_grid(),
                         seed=config.seeds.train + round_idx,
                         uid_offset=(3 << 56) + round_idx * _UID_DESIGN_ROUND_STRIDE)
        return res.inputs, record
    if k > eligible.size:
        record["pool_exhausted"] = True
        k = eligible.size
    if strat.name == "random":
        res = select_random(eligible.size, k, seed=config.seeds.train + round_idx)
        chosen = eligible[res.indices]
    elif strat.name in ("topk", "sbal"):
        scores = qbc_uncertainty(ensemble, pool.ics[eligible], pool.pde_values[eligible],
                                 n_steps, metric=strat.metric, chunk=config.predict_chunk)
        ok = ~scores.failed
        record["n_rollout_masked"] = int(scores.failed.sum())
        usable = eligible[ok]
        if strat.name == "topk":
            res = select_topk(scores.scores[ok], min(k, usable.size))
        else:
            res = select_sbal(scores.scores[ok], min(k, usable.size), strat.m,
                              seed=config.seeds.train + round_idx)
        chosen = usable[res.indices]
    else:  # feature-based: coreset, lcmd, bait
        model = ensemble.evaluation_model
        pool_feats, pool_bad = extract_features(
            model, pool.ics[eligible], pool.pde_values[eligible], n_steps,
            strat.feature_aggregation, chunk=config.predict_chunk)
        train_ics = train_data[:, 0]
        train_vals = np.array([i.pde_params.values for i in train_inputs])
        anchor_feats, anchor_bad = extract_features(
            model, train_ics, train_vals, n_steps, strat.feature_aggregation,
            chunk=config.predict_chunk)
        record["n_rollout_masked"] = int(pool_bad.sum())
        ok = ~pool_bad
        usable = eligible[ok]
        stacked = np.vstack([pool_feats[ok], anchor_feats[~anchor_bad]])
        sk = sketch(stacked, strat.sketch_dim,
                    seed=config.seeds.sketch + round_idx).matrix
        pool_sk = sk[:ok.sum()]
        anchor_sk = sk[ok.sum():]
        kk = min(k, usable.size)
        if strat.name == "coreset":
            res = select_coreset(pool_sk, anchor_sk, kk)
        elif strat.name == "lcmd":
            res = select_lcmd(pool_sk, anchor_sk, kk)
        else:
            res = select_bait(pool_sk, anchor_sk, kk, strat.reg_lambda)
        chosen = usable[res.indices]
    record["diagnostics"] = {key: val for key, val in res.diagnostics.items()
                             if key in ("m", "reg_lambda", "topk_limit")}
    pool.consume(chosen)
    return [pool.inputs[j] for j in chosen], record


def run_al(config: ExperimentConfig, output_dir: str | None = None,
           resume: bool = False, test_cache_dir: str | None = None) -> dict:
    """Execute one AL run; writes report and checkpoints; returns the report."""
    task = get_task(config.task)
    outdir = output_dir or config.output_dir
    os.makedirs(outdir, exist_ok=True)
    solver_cfg = _solver_config(config)

    pool_inputs = sample_sim_inputs(config.pool_size, task.param_spec, task.ic_spec,
                                    task.train_grid(), seed=config.seeds.pool,
                                    uid_offset=UID_POOL)
    pool = PoolState(pool_inputs)
    test_truth, test_inputs = solve_test_set(config, cache_dir=test_cache_dir)
    pool_uid_set = {i.uid for i in pool_inputs}
    if any(i.uid in pool_uid_set for i in test_inputs):
        raise RuntimeError("test uids overlap pool uids (seed-stream separation broken)")

    report_path = os.path.join(outdir, "report.json")
    ckpt_path = os.path.join(outdir, "checkpoint.json")
    data_path = os.path.join(outdir, "train_data.bin")

    rounds: list[dict] = []
    start_round = 0
    if resume and os.path.exists(ckpt_path):
        ckpt = read_json(ckpt_path)
        prior = read_json(report_path)
        if prior["config"] != config.materialized():
            raise ValueError("cannot resume: configuration differs from checkpoint")
        rounds = prior["rounds"]
        start_round = ckpt["completed_rounds"]
        train_traj, train_inputs = load_dataset(data_path)
        train_data = train_traj.data
        pool.consume_uids(ckpt["consumed_uids"])
        pool.mark_failed([pool._uid_to_idx[u] for u in ckpt["failed_uids"]
                          if u in pool._uid_to_idx])
    else:
        init = select_random(config.pool_size, config.schedule.n_initial,
                             seed=config.seeds.train)
        pool.consume(init.indices)
        chosen_inputs = [pool.inputs[j] for j in init.indices]
        t0 = time.perf_counter()
        traj, failed = solve_batch(task, chosen_inputs, solver_cfg)
        sim_s = time.perf_counter() - t0
        keep = ~failed
        train_inputs = [i for i, okF in zip(chosen_inputs, keep) if okF]
        train_data = traj.data[keep]
        if failed.any():
            pool.mark_failed(init.indices[failed])
        rounds = []
        _write_state(config, outdir, rounds, train_data, train_inputs, pool,
                     task, completed=0, extra={"initial_simulate_s": sim_s})

    n_rounds_total = config.schedule.n_iterations + 1
    for r in range(start_round, n_rounds_total):
        timings = {}
        pde_values = np.array([i.pde_params.values for i in train_inputs])
        t0 = time.perf_counter()
        ensemble = _train_ensemble(config, task, r, train_data, pde_values)
        timings["train_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        metrics = evaluate(ensemble.evaluation_model, test_truth, ensemble,
                           chunk=config.predict_chunk)
        timings["evaluate_s"] = time.perf_counter() - t0

        trainee_metrics = None
        if config.trainee is not None:
            t0 = time.perf_counter()
            trainee = _train_trainee(config, task, r, train_data, pde_values)
            trainee_metrics = evaluate(trainee, test_truth,
                                       chunk=config.predict_chunk).to_dict()
            timings["trainee_s"] = time.perf_counter() - t0

        round_rec = {
            "round": r,
            "train_size": len(train_inputs),
            "metrics": metrics.to_dict(),
            "trainee_metrics": trainee_metrics,
            "timings": timings,
        }

        if r < config.schedule.n_iterations:
            k = config.schedule.batch_size(r, len(train_inputs))
            t0 = time.perf_counter()
            new_inputs, sel_record = _select_batch(config, task, r, ensemble, pool,
                                                   k, train_inputs, train_data)
            timings["select_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            traj, failed = solve_batch(task, new_inputs, solver_cfg)
            timings["simulate_s"] = time.perf_counter() - t0
            keep = ~failed
            realized = [i for i, okF in zip(new_inputs, keep) if okF]
            if failed.any() and sel_record["strategy"] != "lhs":
                pool.mark_failed([pool._uid_to_idx[i.uid]
                                  for i, bad in zip(new_inputs, failed) if bad])
            sel_record.update({
                "n_failed_solves": int(failed.sum()),
                "uids": [int(i.uid) for i in realized],
                "pde_values": [i.pde_params.values.tolist() for i in realized],
                "pde_normed": [i.pde_params.normed.tolist() for i in realized],
            })
            round_rec["selection"] = sel_record
            train_inputs = train_inputs + realized
            train_data = np.concatenate([train_data, traj.data[keep]], axis=0)

        rounds.append(round_rec)
        _write_state(config, outdir, rounds, train_data, train_inputs, pool, task,
                     completed=r + 1)

    report = _report_dict(config, rounds)
    write_json_atomic(report, report_path)
    return report


def _report_dict(config: ExperimentConfig, rounds: list[dict]) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "created_at": time.time(),
        "task": config.task,
        "strategy": config.strategy.name,
        "seeds": config.seeds.model_dump(),
        "config": config.materialized(),
        "rounds": rounds,
    }


def _write_state(config, outdir, rounds, train_data, train_inputs, pool, task,
                 completed, extra=None):
    traj = TrajectoryBatch(data=train_data, grid=task.train_grid(),
                           time=task.train_time())
    # checkpoint state keeps full precision so resume is bit-identical
    save_dataset(traj, train_inputs, os.path.join(outdir, "train_data.bin"), dtype="<f8")
    write_json_atomic(_report_dict(config, rounds), os.path.join(outdir, "report.json"))
    ckpt = {
        "completed_rounds": completed,
        "consumed_uids": [int(i.uid) for i, c in zip(pool.inputs, pool.consumed) if c],
        "failed_uids": [int(i.uid) for i, f in zip(pool.inputs, pool.failed) if f],
    }
    if extra:
        ckpt.update(extra)
    write_json_atomic(ckpt, os.path.join(outdir, "checkpoint.json"))


def reuse_experiment(selector_config: ExperimentConfig, trainee: TraineeConfig,
                     output_dir: str | None = None,
                     test_cache_dir: str | None = None) -> dict:
    """AL driven by the selector ensemble, with an uninvolved trainee retrained
    on the accumulated dataset after each round; both error curves land in the
    report (selector under metrics, trainee under trainee_metrics)."""
    cfg = selector_config.model_copy(update={"trainee": trainee})
    return run_al(cfg, output_dir=output_dir, test_cache_dir=test_cache_dir)
