"""Independent brute-force checks used by the test suite and `selftest`.

Every routine here reimplements its target from the definition with dense
loops or direct formulas and shares no code with the implementation it
checks beyond calling the public operation under test. Tolerances are fixed
up front; outcomes report the measured value against them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class OracleOutcome:
    name: str
    passed: bool
    value: float
    tolerance: float
    sample_size: int

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: value={self.value:.3e} tolerance={self.tolerance:.3e} n={self.sample_size}"


# --------------------------------------------------------------- analytic PDE

def heat_mode_solution(amp, k_wave, phi, beta, length, n_x, t):
    """Exact decay of one sine mode under u_t = beta u_xx, periodic."""
    x = np.arange(n_x) / n_x * length
    k_phys = 2.0 * np.pi * k_wave / length
    return amp * np.exp(-beta * k_phys**2 * t) * np.sin(2 * np.pi * k_wave * x / length + phi)


def ks_linear_growth_rates(length, nu, n_modes):
    """Linear growth rate of mode k: (2 pi k / L)^2 - nu (2 pi k / L)^4."""
    k = 2.0 * np.pi * np.arange(1, n_modes + 1) / length
    return k**2 - nu * k**4


# --------------------------------------------------------------- dense metrics

def dense_rmse(pred, truth):
    n, t, x, c = pred.shape
    per = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(t):
            for k in range(x):
                for l in range(c):
                    acc += (pred[i, j, k, l] - truth[i, j, k, l]) ** 2
        per[i] = np.sqrt(acc / (t * x * c))
    return per.mean(), per


def dense_mae(pred, truth):
    n, t, x, c = pred.shape
    per = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(t):
            for k in range(x):
                for l in range(c):
                    acc += abs(pred[i, j, k, l] - truth[i, j, k, l])
        per[i] = acc / (t * x * c)
    return per.mean(), per


def dense_qbc(member_preds, metric="variance"):
    """Direct evaluation of the committee disagreement from its definition.

    member_preds: (n_members, n_cand, n_t, n_x, n_c).
    """
    m, n, t, x, c = member_preds.shape
    scores = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(t):
            for k in range(x):
                mean_vec = np.zeros(c)
                for mm in range(m):
                    mean_vec += member_preds[mm, i, j, k]
                mean_vec /= m
                dev_acc = 0.0
                for mm in range(m):
                    d = member_preds[mm, i, j, k] - mean_vec
                    if metric == "variance":
                        dev_acc += float(d @ d)
                    else:
                        dev_acc += float(np.abs(d).sum())
                acc += dev_acc / m
        scores[i] = acc / (t * x * c)
    return scores


# --------------------------------------------------------------- selection

def brute_topk(scores, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return np.array(order[:k], dtype=np.int64)


def brute_coreset(pool, anchors, k):
    refs = [np.asarray(a) for a in anchors]
    chosen = []
    for _ in range(k):
        best_j, best_d = -1, -1.0
        for j in range(len(pool)):
            if j in chosen:
                continue
            dmin = min(float(np.linalg.norm(pool[j] - r)) for r in refs)
            if dmin > best_d:
                best_j, best_d = j, dmin
        chosen.append(best_j)
        refs.append(pool[best_j])
    return np.array(chosen, dtype=np.int64)


def brute_lcmd(pool, anchors, k):
    centers = [np.asarray(a) for a in anchors]
    chosen = []
    for _ in range(k):
        assign, dists = [], []
        for j in range(len(pool)):
            d2 = [float(np.sum((pool[j] - c) ** 2)) for c in centers]
            best = int(np.argmin(d2))
            assign.append(best)
            dists.append(d2[best])
        mass = [0.0] * len(centers)
        for j in range(len(pool)):
            mass[assign[j]] += dists[j]
        c_star = int(np.argmax(mass))
        best_j, best_d = -1, -np.inf
        in_cluster = [j for j in range(len(pool)) if assign[j] == c_star and j not in chosen]
        if not in_cluster:
            in_cluster = [j for j in range(len(pool)) if j not in chosen]
        for j in in_cluster:
            if dists[j] > best_d:
                best_j, best_d = j, dists[j]
        chosen.append(best_j)
        centers.append(pool[best_j])
    return np.array(chosen, dtype=np.int64)


def bait_objective_dense(pool, included, reg_lambda):
    """Tr[A^{-1} B] with A assembled and inverted from scratch."""
    p = pool.shape[1]
    a = reg_lambda * np.eye(p)
    for row in included:
        a += np.outer(row, row)
    b = np.zeros((p, p))
    for row in pool:
        b += np.outer(row, row)
    return float(np.trace(np.linalg.inv(a) @ b))


def brute_bait(pool, train, k, reg_lambda):
    p = pool.shape[1]
    b = np.zeros((p, p))
    for row in pool:
        b += np.outer(row, row)
    a = reg_lambda * np.eye(p)
    for row in train:
        a += np.outer(row, row)
    chosen = []
    trace = [float(np.trace(np.linalg.inv(a) @ b))]
    for _ in range(k):
        best_j, best_obj = -1, np.inf
        for j in range(len(pool)):
            if j in chosen:
                continue
            obj = float(np.trace(np.linalg.inv(a + np.outer(pool[j], pool[j])) @ b))
            if obj < best_obj:  # strict: first minimum wins ties
                best_j, best_obj = j, obj
        chosen.append(best_j)
        a += np.outer(pool[best_j], pool[best_j])
        trace.append(best_obj)
    return np.array(chosen, dtype=np.int64), trace


# --------------------------------------------------------------- statistics

def chi_square_uniform_pvalue(counts):
    return float(stats.chisquare(counts).pvalue)


def ks_uniform_pvalue(samples):
    return float(stats.kstest(samples, "uniform").pvalue)


def empirical_kl(p_counts, q_counts):
    """KL(p || q) of two empirical distributions over the same support."""
    p = np.asarray(p_counts, dtype=np.float64)
    q = np.asarray(q_counts, dtype=np.float64)
    p, q = p / p.sum(), q / q.sum()
    mask = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))


def wasserstein_1d(a, b):
    """1-Wasserstein distance of two equal-size empirical samples."""
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    if a.shape != b.shape:
        raise ValueError("equal sample sizes required")
    return float(np.abs(a - b).mean())


def stratification_sup_norm(samples):
    """Sup-norm distance of the empirical CDF from uniform, per dimension."""
    samples = np.atleast_2d(samples)
    n = samples.shape[0]
    worst = 0.0
    for d in range(samples.shape[1]):
        s = np.sort(samples[:, d])
        ecdf_hi = np.arange(1, n + 1) / n
        ecdf_lo = np.arange(0, n) / n
        worst = max(worst, float(np.max(np.maximum(np.abs(ecdf_hi - s), np.abs(s - ecdf_lo)))))
    return worst


def jl_distance_ratios(raw, sketched, n_pairs, seed):
    rng = np.random.default_rng(seed)
    n = raw.shape[0]
    ratios = np.empty(n_pairs)
    for t in range(n_pairs):
        i, j = rng.choice(n, size=2, replace=False)
        d_raw = float(np.sum((raw[i] - raw[j]) ** 2))
        d_sk = float(np.sum((sketched[i] - sketched[j]) ** 2))
        ratios[t] = d_sk / d_raw
    return ratios


# --------------------------------------------------------------- suite

def run_all(seed: int = 0, fast: bool = False) -> list[OracleOutcome]:
    """Execute the cross-module oracle suite; failures are outcomes, not errors."""
    from . import _selfcheck

    return _selfcheck.run(seed=seed, fast=fast)
