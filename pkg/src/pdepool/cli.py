"""Command-line surface.

    pdepool simulate    generate and solve a dataset from a config
    pdepool al-run      run the full AL cycle (resumable with --resume)
    pdepool evaluate    metrics of a model checkpoint on a dataset
    pdepool export-csv  run reports -> long-format CSV plus figures
    pdepool selftest    run the cross-module oracle suites

All failures exit nonzero with a message on stderr; partial outputs are
written atomically, so nothing half-finished is ever readable as valid.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


def _cmd_simulate(args) -> int:
    from .config import load_config
    from .dataio import save_dataset
    from .generators import UID_POOL, sample_sim_inputs
    from .solvers import solve_batch
    from .tasks import get_task
    from .alloop import _solver_config

    config = load_config(args.config)
    task = get_task(config.task)
    seed = config.seeds.pool if args.seed is None else args.seed
    inputs = sample_sim_inputs(args.count, task.param_spec, task.ic_spec,
                               task.train_grid(), seed=seed, uid_offset=UID_POOL)
    traj, failed = solve_batch(task, inputs, _solver_config(config))
    keep = ~failed
    if failed.any():
        print(f"warning: {int(failed.sum())} trajectories failed and were dropped",
              file=sys.stderr)
        from .core import TrajectoryBatch
        traj = TrajectoryBatch(traj.data[keep], traj.grid, traj.time)
        inputs = [i for i, ok in zip(inputs, keep) if ok]
    save_dataset(traj, inputs, args.output)
    print(f"wrote {traj.n_traj} {config.task} trajectories "
          f"({traj.time.n_t}x{traj.grid.n_x}) to {args.output}")
    return 0


def _cmd_al_run(args) -> int:
    from .alloop import run_al
    from .config import load_config

    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(
            update={"seeds": config.seeds.model_copy(update={"train": args.seed})})
    report = run_al(config, output_dir=args.outdir, resume=args.resume,
                    test_cache_dir=args.test_cache)
    final = report["rounds"][-1]["metrics"]
    print(f"{config.strategy.name} on {config.task}: "
          f"final test RMSE {final['rmse']:.5f} (train size {report['rounds'][-1]['train_size']})")
    return 0


def _cmd_evaluate(args) -> int:
    from .dataio import load_dataset, write_json_atomic
    from .metrics import evaluate_predictions
    from .surrogate import load_checkpoint

    model = load_checkpoint(args.checkpoint)
    truth, inputs = load_dataset(args.dataset)
    pde_values = np.array([i.pde_params.values for i in inputs])
    n_steps = truth.time.n_t - 1
    preds = np.zeros_like(truth.data)
    ics = truth.data[:, 0]
    for lo in range(0, ics.shape[0], args.chunk):
        sl = slice(lo, min(lo + args.chunk, ics.shape[0]))
        preds[sl] = model.rollout_batch(ics[sl], pde_values[sl], n_steps)[0]
    rep = evaluate_predictions(preds, truth.data).to_dict()
    print(json.dumps(rep, indent=2, sort_keys=True))
    if args.output:
        write_json_atomic(rep, args.output)
    return 0


def _cmd_export_csv(args) -> int:
    import os

    from .dataio import read_json
    from .report import export_csv, render_figures

    reports = [read_json(p) for p in args.reports]
    os.makedirs(args.outdir, exist_ok=True)
    csv_path = os.path.join(args.outdir, "results.csv")
    n = export_csv(reports, csv_path)
    print(f"wrote {n} rows to {csv_path}")
    if not args.no_figures:
        for path in render_figures(reports, args.outdir):
            print(f"wrote {path}")
    return 0


def _cmd_selftest(args) -> int:
    from .oracles import run_all

    outcomes = run_all(seed=args.seed, fast=args.fast)
    failures = 0
    for outcome in outcomes:
        print(outcome.line())
        failures += 0 if outcome.passed else 1
    print(f"{len(outcomes) - failures}/{len(outcomes)} oracles passed")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdepool",
                                     description="active learning for PDE surrogates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate and solve a dataset")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-n", "--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("al-run", help="run the active-learning cycle")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--outdir", default=None)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--test-cache", default=None,
                   help="directory for the shared solved test set")
    p.set_defaults(func=_cmd_al_run)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--chunk", type=int, default=200)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export-csv", help="reports -> long-format CSV + figures")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--outdir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_export_csv)

    p = sub.add_parser("selftest", help="run the oracle suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as exit code + message, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
