#!/usr/bin/env python3
"""Drive the desk-scale CE experiments behind the directional acceptance checks.

Runs {random, sbal, lcmd, bait} x 5 training seeds at the desk-scale setup
(pool 8192, test 512, 64 initial trajectories, 3 AL iterations, hidden 32,
250 epochs). A fresh trainee (hidden 48) rides along on the sbal and random
runs for the data-reusability comparison. Reports land in
results/acceptance/<strategy>-seed<i>/report.json and are what
tests/test_acceptance.py consumes.

Strategies that never read ensemble uncertainty run with a single member;
the evaluation model's training is identical either way, it just skips
training a never-used second member.

Run from the repository root:

    python3 scripts/run_acceptance.py --jobs 2
"""

import argparse
import json
import os
import sys
import time

TRAIN_SEEDS = [3001, 3002, 3003, 3004, 3005]
POOL_SEED = 101
TEST_SEED = 202
STRATEGIES = ["random", "sbal", "lcmd", "bait"]
TRAINEE_STRATEGIES = ("random", "sbal")


def make_config_dict(strategy: str, seed_idx: int) -> dict:
    train_seed = TRAIN_SEEDS[seed_idx]
    cfg = {
        "task": "ce",
        "strategy": {"name": strategy, "m": 1.0, "sketch_dim": 128},
        "schedule": {"n_initial": 64, "n_iterations": 3},
        "model": {"hidden": 32,
                  "ensemble_size": 2 if strategy in ("sbal", "topk") else 1},
        "train": {"epochs": 250, "batch_size": 512},
        "pool_size": 8192,
        "test_size": 512,
        "seeds": {"pool": POOL_SEED, "test": TEST_SEED,
                  "train": train_seed, "sketch": 40_000 + train_seed},
    }
    if strategy in TRAINEE_STRATEGIES:
        cfg["trainee"] = {"hidden": 48, "seed": 7000 + seed_idx}
    return cfg


def run_one(job):
    strategy, seed_idx, outroot, cache_dir = job
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # env vars above already cover the spawn path
        from contextlib import nullcontext as threadpool_limits
    from pdepool.alloop import run_al
    from pdepool.config import config_from_dict

    outdir = os.path.join(outroot, f"{strategy}-seed{seed_idx}")
    report_path = os.path.join(outdir, "report.json")
    done_rounds = 0
    if os.path.exists(report_path):
        with open(report_path) as fh:
            done_rounds = len(json.load(fh).get("rounds", []))
    cfg = config_from_dict(make_config_dict(strategy, seed_idx))
    if done_rounds == cfg.schedule.n_iterations + 1:
        return strategy, seed_idx, "cached", 0.0
    t0 = time.perf_counter()
    with threadpool_limits(1):
        report = run_al(cfg, output_dir=outdir,
                        resume=os.path.exists(os.path.join(outdir, "checkpoint.json")),
                        test_cache_dir=cache_dir)
    final = report["rounds"][-1]["metrics"]["rmse"]
    return strategy, seed_idx, f"rmse={final:.5f}", time.perf_counter() - t0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="results/acceptance")
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--strategies", nargs="+", default=STRATEGIES)
    parser.add_argument("--seeds", type=int, nargs="+",
                        default=list(range(len(TRAIN_SEEDS))))
    args = parser.parse_args()

    os.makedirs(args.outdir, exist_ok=True)
    cache_dir = os.path.join(args.outdir, "test_cache")

    # solve the shared test set once before the workers race for it
    from pdepool.alloop import solve_test_set
    from pdepool.config import config_from_dict
    solve_test_set(config_from_dict(make_config_dict("random", 0)), cache_dir=cache_dir)

    jobs = [(s, i, args.outdir, cache_dir)
            for i in args.seeds for s in args.strategies]
    t0 = time.perf_counter()
    if args.jobs <= 1:
        results = [run_one(j) for j in jobs]
    else:
        import multiprocessing as mp
        ctx = mp.get_context("spawn")
        with ctx.Pool(args.jobs) as pool:
            results = []
            for res in pool.imap_unordered(run_one, jobs):
                results.append(res)
                print(f"[{time.perf_counter() - t0:7.0f}s] {res[0]}-seed{res[1]}: "
                      f"{res[2]} ({res[3]:.0f}s)", flush=True)
    print(f"all {len(results)} runs finished in {time.perf_counter() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
