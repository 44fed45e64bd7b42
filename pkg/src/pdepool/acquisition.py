"""Candidate scoring: ensemble-disagreement uncertainty and rollout features.

Both paths roll the surrogate(s) out over the full training-resolution
trajectory from each candidate IC; no ground truth is consumed. The pool is
processed in chunks (200 candidates by default) to bound memory. Candidates
whose rollout goes non-finite are flagged rather than scored, and selection
masks them out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .surrogate import Ensemble, SurrogateModel

DEFAULT_CHUNK = 200

_COLLECT_FOR = {
    "spatial_mean": "last_mean",
    "full": "last",
    "mid_layer": "mid",
    "mid_layer_mean": "mid_mean",
}


@dataclass(frozen=True)
class AcquisitionScores:
    """Per-candidate nonnegative informativeness; failed rollouts are masked."""

    scores: np.ndarray
    metric: str
    failed: np.ndarray

    def __post_init__(self):
        ok = self.scores[~self.failed]
        if ok.size and (not np.all(np.isfinite(ok)) or np.any(ok < 0)):
            raise ValueError("scores must be finite and nonnegative")


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-candidate sketched feature vectors with their provenance."""

    matrix: np.ndarray
    sketch_seed: int | None
    provenance: dict = field(default_factory=dict)


def qbc_uncertainty(ensemble: Ensemble, ics: np.ndarray, pde_values: np.ndarray,
                    rollout_steps: int, metric: str = "variance",
                    chunk: int = DEFAULT_CHUNK) -> AcquisitionScores:
    """Committee disagreement across the rollout.

    variance: mean over (t, x) of the member-mean squared channel norm of the
    deviation from the member-mean trajectory; the committee variance of the
    predictions. absolute: the squared norm is replaced by the channel-wise
    L1 deviation, targeting absolute-error objectives.
    """
    if ensemble.n_members < 2:
        raise ValueError("committee uncertainty needs at least 2 members")
    if metric not in ("variance", "absolute"):
        raise ValueError(f"unknown uncertainty metric {metric!r}")
    n = ics.shape[0]
    scores = np.zeros(n, dtype=np.float64)
    failed = np.zeros(n, dtype=bool)
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        preds = []
        for member in ensemble.members:
            p, _, bad = member.rollout_batch(ics[sl], pde_values[sl], rollout_steps)
            preds.append(p)
            failed[sl] |= bad
        stack = np.stack(preds)                      # (m, b, t, x, c)
        dev = stack - stack.mean(axis=0)
        if metric == "variance":
            per_point = (dev**2).sum(axis=-1)        # ||.||^2 over channels
        else:
            per_point = np.abs(dev).sum(axis=-1)
        # member mean and 1/(N_t N_x N_c) normalization
        scores[sl] = per_point.mean(axis=(0, 2, 3)) / stack.shape[-1]
    scores[failed] = 0.0
    return AcquisitionScores(scores=scores, metric=metric, failed=failed)


def extract_features(model: SurrogateModel, ics: np.ndarray, pde_values: np.ndarray,
                     rollout_steps: int, aggregation: str = "spatial_mean",
                     chunk: int = DEFAULT_CHUNK):
    """Rollout latent features of the evaluation model, one row per candidate.

    spatial_mean (default): per-step spatial average of the activations
    entering the final convolution, concatenated over steps -> H * steps.
    full: those activations flattened -> n_x * H * steps. The mid_layer
    variants read the activations after the second convolution instead.
    Returns (features, failed).
    """
    if aggregation not in _COLLECT_FOR:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    collect = _COLLECT_FOR[aggregation]
    n = ics.shape[0]
    rows = None
    failed = np.zeros(n, dtype=bool)
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        _, feats, bad = model.rollout_batch(ics[sl], pde_values[sl], rollout_steps,
                                            collect=collect)
        flat = feats.reshape(feats.shape[0], -1)
        if rows is None:
            rows = np.zeros((n, flat.shape[1]), dtype=np.float64)
        rows[sl] = flat
        failed[sl] |= bad
    return rows, failed


def sketch(raw_features: np.ndarray, p_prime: int, seed: int | None,
           matrix: np.ndarray | None = None) -> FeatureMatrix:
    """Gaussian sketch U phi / sqrt(p'), one shared U per selection round.

    `matrix` overrides the random U (test hook; pass np.eye(p) for identity).
    """
    raw = np.asarray(raw_features, dtype=np.float64)
    if p_prime < 1:
        raise ValueError("sketch dimension must be >= 1")
    p = raw.shape[1]
    if matrix is None:
        rng = np.random.Generator(np.random.Philox(
            key=np.array([seed, 0x5CE7C4], dtype=np.uint64)))
        matrix = rng.standard_normal((p_prime, p))
    elif matrix.shape != (p_prime, p):
        raise ValueError(f"sketch matrix must be ({p_prime}, {p})")
    out = raw @ matrix.T / np.sqrt(p_prime)
    return FeatureMatrix(matrix=out, sketch_seed=seed,
                         provenance={"p_raw": p, "p_prime": p_prime})
