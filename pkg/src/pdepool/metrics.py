"""Error and correlation metrics for trajectory predictions.

The scalar RMSE is the mean of per-trajectory RMSEs (each the root of the
mean squared deviation over time, space, and channels), which is also what
the error quantiles are computed from. Quantiles use the linear-interpolation
convention between order statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    per_traj_rmse: np.ndarray
    q50: float
    q95: float
    q99: float
    n_traj: int
    pearson: float | None = None
    spearman: float | None = None

    def __post_init__(self):
        if not self.q50 <= self.q95 <= self.q99:
            raise ValueError("quantiles out of order")

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse, "mae": self.mae,
            "q50": self.q50, "q95": self.q95, "q99": self.q99,
            "n_traj": self.n_traj,
            "pearson": self.pearson, "spearman": self.spearman,
        }


def _check_shapes(pred: np.ndarray, truth: np.ndarray):
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")


def rmse(pred: np.ndarray, truth: np.ndarray):
    """Per-trajectory root mean squared error and its mean over trajectories."""
    _check_shapes(pred, truth)
    dev = pred - truth
    per_traj = np.sqrt((dev * dev).mean(axis=(1, 2, 3)))
    return float(per_traj.mean()), per_traj


def mae(pred: np.ndarray, truth: np.ndarray):
    """Per-trajectory mean absolute error and its mean over trajectories."""
    _check_shapes(pred, truth)
    per_traj = np.abs(pred - truth).mean(axis=(1, 2, 3))
    return float(per_traj.mean()), per_traj


def quantiles(per_traj: np.ndarray, qs=(0.5, 0.95, 0.99)):
    per_traj = np.asarray(per_traj, dtype=np.float64)
    if per_traj.size == 0:
        raise ValueError("cannot take quantiles of an empty vector")
    return tuple(float(np.quantile(per_traj, q, method="linear")) for q in qs)


def correlation(unc: np.ndarray, err: np.ndarray):
    """Sample Pearson and Spearman (Pearson on average ranks) coefficients."""
    unc = np.asarray(unc, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    if unc.shape != err.shape or unc.size < 3:
        raise ValueError("correlation needs two equal-length vectors, n >= 3")
    if unc.std() == 0 or err.std() == 0:
        raise ValueError("correlation undefined for zero-variance input")
    pearson = _pearson(unc, err)
    spearman = _pearson(rankdata(unc), rankdata(err))
    return pearson, spearman


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    return float((da * db).sum() / np.sqrt((da * da).sum() * (db * db).sum()))


def evaluate_predictions(pred: np.ndarray, truth: np.ndarray,
                         unc: np.ndarray | None = None) -> MetricsReport:
    """Full report for a batch of predicted vs true trajectories."""
    scalar_rmse, per_traj = rmse(pred, truth)
    scalar_mae, _ = mae(pred, truth)
    q50, q95, q99 = quantiles(per_traj)
    pearson = spearman = None
    if unc is not None and np.asarray(unc).std() > 0 and per_traj.std() > 0:
        pearson, spearman = correlation(unc, per_traj)
    return MetricsReport(rmse=scalar_rmse, mae=scalar_mae, per_traj_rmse=per_traj,
                         q50=q50, q95=q95, q99=q99, n_traj=pred.shape[0],
                         pearson=pearson, spearman=spearman)
