"""Batch construction from scores or features.

Seven strategies: uniform random, Latin hypercube (fresh inputs, not a pool
filter), Top-K, sharpness-controlled stochastic sampling, greedy
farthest-point coverage, largest-cluster-maximum-distance, and greedy
posterior-variance minimization for Bayesian linear regression on the
features. Ties break toward the lowest index everywhere, and every strategy
is deterministic given its seed. Callers mask failed candidates before
scoring, so indices here refer to the arrays as given.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PDEParams, SimInput
from .generators import (
    UID_DESIGN,
    ic_params_from_normed,
    make_sim_input,
    params_from_normed,
)

# m at or above this is the documented infinite-sharpness regime: exact Top-K
SBAL_TOPK_THRESHOLD = 1e3


@dataclass(frozen=True)
class SelectionResult:
    strategy: str
    indices: np.ndarray | None = None
    inputs: list[SimInput] | None = None
    diagnostics: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=np.int64)
            if len(np.unique(idx)) != len(idx):
                raise ValueError("selected indices must be unique")
            object.__setattr__(self, "indices", idx)


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, tag], dtype=np.uint64)))


def select_random(pool_size: int, k: int, seed: int) -> SelectionResult:
    if k > pool_size:
        raise ValueError(f"cannot draw {k} from a pool of {pool_size}")
    idx = _rng(seed, 0xA11).choice(pool_size, size=k, replace=False)
    return SelectionResult(strategy="random", indices=np.sort(idx), seed=seed)


def select_topk(scores: np.ndarray, k: int) -> SelectionResult:
    scores = np.asarray(scores, dtype=np.float64)
    if k > scores.size:
        raise ValueError(f"cannot take top {k} of {scores.size} scores")
    order = np.argsort(-scores, kind="stable")  # stable: ties go to lowest index
    return SelectionResult(strategy="topk", indices=order[:k])


def select_sbal(scores: np.ndarray, k: int, m: float, seed: int) -> SelectionResult:
    """Sample k candidates without replacement with p proportional to score^m.

    m=0 is uniform sampling; m >= SBAL_TOPK_THRESHOLD short-circuits to the
    exact Top-K limit. Zero-score candidates carry zero probability, so they
    are drawn (uniformly) only once every positive-score candidate is taken.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if k > n:
        raise ValueError(f"cannot draw {k} from {n} candidates")
    if m < 0:
        raise ValueError("sharpness m must be >= 0")
    if m >= SBAL_TOPK_THRESHOLD:
        res = select_topk(scores, k)
        return SelectionResult(strategy="sbal", indices=res.indices, seed=seed,
                               diagnostics={"m": m, "topk_limit": True})
    if m == 0:
        weights = np.ones(n)
    else:
        top = scores.max()
        if top <= 0:
            weights = np.zeros(n)
        else:
            with np.errstate(divide="ignore"):
                weights = np.exp(m * np.log(scores / top, where=scores > 0,
                                            out=np.full(n, -np.inf)))
    rng = _rng(seed, 0x5BA1)
    remaining = np.ones(n, dtype=bool)
    chosen = np.empty(k, dtype=np.int64)
    for draw in range(k):
        w = np.where(remaining, weights, 0.0)
        total = w.sum()
        if total > 0:
            cum = np.cumsum(w)
            j = int(np.searchsorted(cum, rng.random() * total, side="right"))
            j = min(j, n - 1)
            while not remaining[j] or w[j] == 0.0:  # fp-edge guard
                j += 1
        else:
            # zero tier: uniform over what is left
            left = np.flatnonzero(remaining)
            j = int(left[rng.integers(left.size)])
        chosen[draw] = j
        remaining[j] = False
    return SelectionResult(strategy="sbal", indices=chosen, seed=seed,
                           diagnostics={"m": m, "topk_limit": False})


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances (n_a, n_b), clipped at zero."""
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def _min_sq_dist_to(points: np.ndarray, refs: np.ndarray, chunk: int = 1024):
    best = np.full(points.shape[0], np.inf)
    arg = np.zeros(points.shape[0], dtype=np.int64)
    for lo in range(0, refs.shape[0], chunk):
        d2 = _sq_dists(points, refs[lo:lo + chunk])
        local_arg = d2.argmin(axis=1)
        local = d2[np.arange(points.shape[0]), local_arg]
        better = local < best
        best[better] = local[better]
        arg[better] = local_arg[better] + lo
    return best, arg


def select_coreset(pool_features: np.ndarray, anchor_features: np.ndarray,
                   k: int) -> SelectionResult:
    """Greedy farthest-point coverage: each pick maximizes the distance to the
    closest anchor or previously selected point."""
    pool = np.asarray(pool_features, dtype=np.float64)
    anchors = np.asarray(anchor_features, dtype=np.float64)
    if anchors.shape[0] == 0:
        raise ValueError("core-set selection needs a non-empty anchor set")
    if k > pool.shape[0]:
        raise ValueError(f"cannot select {k} of {pool.shape[0]} candidates")
    min_d2, _ = _min_sq_dist_to(pool, anchors)
    chosen = np.empty(k, dtype=np.int64)
    trace = []
    for i in range(k):
        j = int(np.argmax(min_d2))  # first occurrence: lowest index on ties
        chosen[i] = j
        trace.append(float(np.sqrt(min_d2[j])))
        d2_new = _sq_dists(pool, pool[j:j + 1])[:, 0]
        np.minimum(min_d2, d2_new, out=min_d2)
        min_d2[j] = -np.inf  # never reselect
    return SelectionResult(strategy="coreset", indices=chosen,
                           diagnostics={"min_dist_trace": trace})


def select_lcmd(pool_features: np.ndarray, anchor_features: np.ndarray,
                k: int) -> SelectionResult:
    """Largest-cluster-maximum-distance selection.

    Pool points are assigned to their nearest center (anchors plus previous
    picks); the cluster with the largest sum of squared distances supplies
    the next pick: its farthest member, which immediately becomes a center.
    """
    pool = np.asarray(pool_features, dtype=np.float64)
    anchors = np.asarray(anchor_features, dtype=np.float64)
    if anchors.shape[0] == 0:
        raise ValueError("lcmd selection needs a non-empty anchor set")
    if k > pool.shape[0]:
        raise ValueError(f"cannot select {k} of {pool.shape[0]} candidates")
    dist, center = _min_sq_dist_to(pool, anchors)
    selectable = np.ones(pool.shape[0], dtype=bool)
    n_centers = anchors.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    masses = []
    for i in range(k):
        cluster_mass = np.bincount(center, weights=dist, minlength=n_centers)
        c = int(np.argmax(cluster_mass))
        in_cluster = (center == c) & selectable
        if not in_cluster.any():  # degenerate: empty or fully selected cluster
            in_cluster = selectable
        cand_dist = np.where(in_cluster, dist, -np.inf)
        j = int(np.argmax(cand_dist))
        chosen[i] = j
        masses.append(float(cluster_mass[c]))
        selectable[j] = False
        d2_new = _sq_dists(pool, pool[j:j + 1])[:, 0]
        closer = d2_new < dist
        dist[closer] = d2_new[closer]
        center[closer] = n_centers
        dist[j] = 0.0
        center[j] = n_centers
        n_centers += 1
    return SelectionResult(strategy="lcmd", indices=chosen,
                           diagnostics={"cluster_mass_trace": masses})


def bait_default_lambda(pool_features: np.ndarray) -> float:
    pool = np.asarray(pool_features, dtype=np.float64)
    return 1e-2 * float((pool * pool).sum(axis=0).mean()) / pool.shape[0]


def select_bait(pool_features: np.ndarray, train_features: np.ndarray, k: int,
                reg_lambda: float | None = None) -> SelectionResult:
    """Forward-greedy minimization of Tr[A_S^{-1} B].

    A_S = lambda*I + sum of outer products over train and selected features;
    B sums outer products over the pool. Each greedy sweep scores every
    remaining candidate through a rank-one (Sherman-Morrison) update of the
    inverse. The recorded objective trace is non-increasing.
    """
    pool = np.asarray(pool_features, dtype=np.float64)
    train = np.asarray(train_features, dtype=np.float64)
    n, p = pool.shape
    if k > n:
        raise ValueError(f"cannot select {k} of {n} candidates")
    if reg_lambda is None:
        reg_lambda = bait_default_lambda(pool)
    if reg_lambda <= 0:
        raise ValueError("regularization must be positive")
    b_mat = pool.T @ pool
    a_mat = reg_lambda * np.eye(p) + (train.T @ train if train.size else 0.0)
    try:
        m_inv = np.linalg.inv(a_mat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular information matrix: {exc}") from exc
    objective = float(np.trace(m_inv @ b_mat))
    trace = [objective]
    available = np.ones(n, dtype=bool)
    chosen = np.empty(k, dtype=np.int64)
    for i in range(k):
        u = pool @ m_inv                       # rows: M phi
        denom = 1.0 + (u * pool).sum(axis=1)
        numer = ((u @ b_mat) * u).sum(axis=1)  # phi^T M B M phi
        gain = np.where(available, numer / denom, -np.inf)
        j = int(np.argmax(gain))
        chosen[i] = j
        available[j] = False
        mphi = m_inv @ pool[j]
        m_inv -= np.outer(mphi, mphi) / denom[j]
        m_inv = 0.5 * (m_inv + m_inv.T)
        objective -= float(gain[j])
        trace.append(objective)
        if not np.isfinite(objective):
            raise np.linalg.LinAlgError("bait objective became non-finite")
    return SelectionResult(strategy="bait", indices=chosen,
                           diagnostics={"objective_trace": trace,
                                        "reg_lambda": float(reg_lambda)})


def select_lhs(n: int, param_spec, ic_spec, grid, seed: int,
               uid_offset: int = UID_DESIGN) -> SelectionResult:
    """Latin hypercube over the full normalized input vector.

    Every dimension (PDE parameters, then IC amplitudes, wave numbers,
    phases, window and flip variables) is stratified into n equal intervals
    with one draw per interval, permuted independently across dimensions.
    Discrete variables inherit stratification through their quantile maps.
    Generates fresh inputs rather than filtering the pool.
    """
    if n < 1:
        raise ValueError("need n >= 1 design points")
    rng = _rng(seed, 0x1A5)
    dims = param_spec.n_dims + ic_spec.n_normed_dims
    u = np.empty((n, dims))
    for d in range(dims):
        u[:, d] = (rng.permutation(n) + rng.random(n)) / n
    pde_normed = u[:, :param_spec.n_dims]
    pde_values = params_from_normed(param_spec, pde_normed)
    inputs = []
    for i in range(n):
        ic = ic_params_from_normed(ic_spec, u[i, param_spec.n_dims:])
        pde = PDEParams(values=pde_values[i], normed=pde_normed[i])
        inputs.append(make_sim_input(ic, pde, grid, uid=uid_offset + i))
    return SelectionResult(strategy="lhs", inputs=inputs, seed=seed,
                           diagnostics={"n_dims": dims})
