"""Autoregressive convolutional surrogate with residual output and ensembles.

One step of the model maps a state u to the next stored snapshot:

    u_next = u + 0.3 * sigma * net(u / sigma, conditioning channels)

where sigma is the channel-wise standard deviation of the training data and
the PDE parameters enter as constant channels scaled to unit range by their
task bounds. Training minimizes the mean per-sample RMSE of short rollouts
(two steps by default, gradient flowing through both) with Adam, a cosine
learning-rate schedule, and adaptive global-norm gradient clipping calibrated
during the first epochs.

The underlying network and its reverse-mode gradients live in convnet.py;
`grad_check` validates them against central finite differences. Like the
network, a model instance is not safe for concurrent calls.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .convnet import Adam, ConvNet, cosine_lr, global_norm

_RMSE_EPS = 1e-24  # keeps the sqrt differentiable at a perfect fit


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class NormStats:
    """Channel-wise std of the training data plus conditioning-channel bounds."""

    sigma: np.ndarray
    cond_lo: np.ndarray
    cond_hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))
        object.__setattr__(self, "cond_lo", np.asarray(self.cond_lo, dtype=np.float64))
        object.__setattr__(self, "cond_hi", np.asarray(self.cond_hi, dtype=np.float64))
        if np.any(self.sigma <= 0):
            raise ValueError("zero-variance channel in normalization stats")

    def cond_normed(self, pde_values: np.ndarray) -> np.ndarray:
        span = self.cond_hi - self.cond_lo
        return (np.asarray(pde_values, dtype=np.float64) - self.cond_lo) / span


def fit_norm_stats(data: np.ndarray, cond_lo, cond_hi) -> NormStats:
    """sigma_c = std over all trajectories, timesteps, and points of channel c."""
    if data.size == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    sigma = data.reshape(-1, data.shape[-1]).std(axis=0)
    return NormStats(sigma=sigma, cond_lo=cond_lo, cond_hi=cond_hi)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch_size: int = 512            # sub-trajectories per minibatch
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    subtraj_steps: int = 2           # rollout length of the training loss
    windows_per_traj: int = 1        # random sub-trajectory windows per trajectory per epoch
    clip_factor: float = 5.0
    clip_warmup_epochs: int = 5
    clip_ema_decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.subtraj_steps < 1 or self.windows_per_traj < 1:
            raise ValueError("bad training configuration")


class SurrogateModel:
    """Fixed-architecture residual surrogate: weights, norm stats, history."""

    def __init__(self, n_c: int, n_params: int, hidden: int = 32,
                 residual_scale: float = 0.3, seed: int = 0):
        self.n_c = n_c
        self.n_params = n_params
        self.hidden = hidden
        self.residual_scale = residual_scale
        self.seed = seed
        self.net = ConvNet(n_c + n_params, hidden, n_c, seed=seed)
        self.norm: NormStats | None = None
        self.history: list[float] = []
        self.epochs_trained = 0

    # ------------------------------------------------------------- stepping

    def _require_norm(self) -> NormStats:
        if self.norm is None:
            raise RuntimeError("normalization stats not set; fit_norm_stats first")
        return self.norm

    def _step(self, u: np.ndarray, cond: np.ndarray, slot, need_cache: bool):
        """One residual step. u (B, n_x, n_c), cond (B, l) already unit-scaled.

        Returns pool-owned (u_next, last_feats, mid_feats); consume before the
        same slot is reused.
        """
        norm = self._require_norm()
        pool = self.net.pool
        b, n_x, n_c = u.shape
        x_in = pool.get(("xin", slot), (b, n_x, n_c + self.n_params))
        np.divide(u, norm.sigma, out=x_in[:, :, :n_c])
        x_in[:, :, n_c:] = cond[:, None, :]
        raw, feats, mid = self.net.forward(x_in, slot=slot, need_cache=need_cache)
        u_next = pool.get(("unext", slot), u.shape)
        np.multiply(raw, self.residual_scale * norm.sigma, out=u_next)
        u_next += u
        return u_next, feats, mid

    def _step_backward(self, slot, d_next: np.ndarray) -> np.ndarray:
        """Backprop one step; accumulates weight grads, returns dL/du (pool)."""
        norm = self._require_norm()
        pool = self.net.pool
        b, n_x, n_c = d_next.shape
        draw = pool.get(("draw", slot), d_next.shape)
        np.multiply(d_next, self.residual_scale * norm.sigma, out=draw)
        dx = self.net.backward(slot, draw)
        du = pool.get(("du", slot), d_next.shape)
        np.divide(dx[:, :, :n_c], norm.sigma, out=du)
        du += d_next
        return du

    def forward(self, state: np.ndarray, pde_values: np.ndarray):
        """One step for a single state (n_x, n_c). Returns (next_state, features)."""
        state = np.asarray(state, dtype=np.float64)
        squeeze = state.ndim == 2
        batch = state[None] if squeeze else state
        cond = self._require_norm().cond_normed(np.atleast_2d(pde_values))
        u_next, feats, _ = self._step(batch, cond, slot="inf", need_cache=False)
        if not np.all(np.isfinite(u_next)):
            raise FloatingPointError("non-finite surrogate output")
        u_next, feats = u_next.copy(), feats.copy()
        return (u_next[0], feats[0]) if squeeze else (u_next, feats)

    def rollout_batch(self, ics: np.ndarray, pde_values: np.ndarray, n_steps: int,
                      collect: str | None = None):
        """Autoregressive rollout of a batch of ICs.

        Returns (preds (B, n_steps+1, n_x, n_c), feats, failed). `collect`
        selects the feature stream: None, "last", "last_mean", "mid",
        "mid_mean". A trajectory that goes non-finite is flagged and its
        remaining frames (and features) stay zero.
        """
        ics = np.asarray(ics, dtype=np.float64)
        b, n_x, n_c = ics.shape
        cond_all = self._require_norm().cond_normed(np.atleast_2d(pde_values))
        preds = np.zeros((b, n_steps + 1, n_x, n_c), dtype=np.float64)
        preds[:, 0] = ics
        if collect is None:
            feats = None
        elif collect in ("last_mean", "mid_mean"):
            feats = np.zeros((b, n_steps, self.hidden), dtype=np.float64)
        elif collect in ("last", "mid"):
            feats = np.zeros((b, n_steps, n_x, self.hidden), dtype=np.float64)
        else:
            raise ValueError(f"unknown feature aggregation {collect!r}")
        failed = np.zeros(b, dtype=bool)
        u = ics.copy()
        alive = np.arange(b)
        for step in range(1, n_steps + 1):
            if alive.size == 0:
                break
            whole = alive.size == b
            u_in = u if whole else u[alive]
            cond = cond_all if whole else cond_all[alive]
            u_next, f_last, f_mid, = self._step(u_in, cond, slot="inf", need_cache=False)
            ok = np.all(np.isfinite(u_next), axis=(1, 2))
            failed[alive[~ok]] = True
            keep = alive[ok]
            u[keep] = u_next[ok]
            preds[keep, step] = u_next[ok]
            if collect is not None:
                f = f_last if collect.startswith("last") else f_mid
                f = f[ok]
                feats[keep, step - 1] = f.mean(axis=1) if collect.endswith("_mean") else f
            alive = keep
        return preds, feats, failed

    def rollout(self, ic: np.ndarray, pde_values: np.ndarray, n_steps: int,
                collect: str | None = None):
        ic = np.asarray(ic, dtype=np.float64)
        if ic.ndim == 1:
            ic = ic[:, None]
        preds, feats, failed = self.rollout_batch(ic[None], np.atleast_2d(pde_values),
                                                  n_steps, collect)
        return preds[0], (None if feats is None else feats[0]), bool(failed[0])

    # ------------------------------------------------------------- training

    def loss_and_grads(self, u_seq: np.ndarray, pde_values: np.ndarray):
        """Mean per-sample RMSE of the subtrajectory rollout, plus gradients.

        u_seq is (B, n_steps+1, n_x, n_c): start states and targets. The
        gradient flows through every intermediate predicted state. Returned
        gradients are the network's accumulation buffers: consume them before
        the next call.
        """
        b, n_steps_p1, n_x, n_c = u_seq.shape
        n_steps = n_steps_p1 - 1
        cond = self._require_norm().cond_normed(np.atleast_2d(pde_values))
        pool = self.net.pool
        self.net.zero_grads()
        u = u_seq[:, 0]
        errors = []
        for t in range(n_steps):
            u, _, _ = self._step(u, cond, slot=t, need_cache=True)
            err = pool.get(("err", t), u.shape)
            np.subtract(u, u_seq[:, t + 1], out=err)
            errors.append(err)
        denom = n_steps * n_x * n_c
        mse = sum(np.sum(e * e, axis=(1, 2)) for e in errors) / denom
        rmse = np.sqrt(mse + _RMSE_EPS)
        loss = float(rmse.mean())
        scale = (1.0 / (b * denom)) / rmse  # dL/de per sample
        d_carry = None
        d_buf = pool.get(("dnext",), u_seq[:, 0].shape)
        for t in range(n_steps - 1, -1, -1):
            np.multiply(errors[t], scale[:, None, None], out=d_buf)
            if d_carry is not None:
                d_buf += d_carry
            d_carry = self._step_backward(t, d_buf)
        return loss, self.net.grad_bufs

    def train(self, trajectories: np.ndarray, pde_values: np.ndarray,
              cfg: TrainConfig) -> "SurrogateModel":
        """Train in place on (N, T, n_x, n_c) trajectories; returns self.

        Each epoch draws `windows_per_traj` random sub-trajectory windows per
        trajectory, shuffles them, and sweeps minibatches. Single-threaded
        runs with a fixed seed are bit-reproducible.
        """
        if cfg.epochs == 0:
            return self
        data = np.asarray(trajectories, dtype=np.float64)
        n_traj, n_t = data.shape[0], data.shape[1]
        if n_traj == 0:
            raise ValueError("cannot train on an empty dataset")
        n_steps = cfg.subtraj_steps
        if n_t < n_steps + 1:
            raise ValueError(f"trajectories too short for {n_steps}-step training")
        pde_values = np.atleast_2d(np.asarray(pde_values, dtype=np.float64))
        rng = np.random.Generator(np.random.Philox(
            key=np.array([cfg.seed, 0x7EA1 + self.seed], dtype=np.uint64)))
        optim = Adam(self.net.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
        clip_mu = 0.0
        warmup_max = 0.0
        initial_loss = None
        for epoch in range(cfg.epochs):
            lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)
            starts = rng.integers(0, n_t - n_steps, size=n_traj * cfg.windows_per_traj)
            traj_idx = np.repeat(np.arange(n_traj), cfg.windows_per_traj)
            order = rng.permutation(traj_idx.size)
            traj_idx, starts = traj_idx[order], starts[order]
            epoch_loss, n_seen = 0.0, 0
            for lo in range(0, traj_idx.size, cfg.batch_size):
                ti = traj_idx[lo:lo + cfg.batch_size]
                st = starts[lo:lo + cfg.batch_size]
                window = st[:, None] + np.arange(n_steps + 1)
                u_seq = data[ti[:, None], window]
                loss, grads = self.loss_and_grads(u_seq, pde_values[ti])
                norm = global_norm(grads)
                if epoch < cfg.clip_warmup_epochs:
                    warmup_max = max(warmup_max, norm)
                else:
                    if clip_mu == 0.0:
                        clip_mu = warmup_max if warmup_max > 0 else 1.0
                    threshold = cfg.clip_factor * clip_mu
                    if norm > threshold:
                        for g in grads:
                            g *= threshold / norm
                    clip_mu = cfg.clip_ema_decay * clip_mu + \
                        (1.0 - cfg.clip_ema_decay) * min(norm, threshold)
                optim.step(self.net.params, grads, lr)
                epoch_loss += loss * len(ti)
                n_seen += len(ti)
            epoch_loss /= n_seen
            if initial_loss is None:
                initial_loss = max(epoch_loss, 1e-300)
            if epoch_loss > 1e3 * initial_loss:
                raise TrainingDiverged(
                    f"loss {epoch_loss:.3e} exceeded 1e3 x initial {initial_loss:.3e} "
                    f"at epoch {epoch}")
            self.history.append(epoch_loss)
            self.epochs_trained += 1
        return self


def grad_check(model: SurrogateModel, u_seq: np.ndarray | None = None,
               pde_values: np.ndarray | None = None, n_weights: int = 200,
               h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error of the analytic gradient vs central finite differences.

    Checks >= n_weights randomly chosen coordinates across all parameter
    arrays. The relative error uses a small-magnitude floor so coordinates
    with a vanishing gradient compare absolutely at the difference scale.
    """
    rng = np.random.default_rng(seed)
    if u_seq is None:
        b, n_x = 3, 16
        u_seq = rng.standard_normal((b, 3, n_x, model.n_c))
        pde_values = rng.random((b, model.n_params))
        if model.norm is None:
            model.norm = NormStats(np.ones(model.n_c), np.zeros(model.n_params),
                                   np.ones(model.n_params))
    _, grad_bufs = model.loss_and_grads(u_seq, pde_values)
    grads = [g.copy() for g in grad_bufs]
    flat_sizes = [p.size for p in model.net.params]
    total = sum(flat_sizes)
    coords = rng.choice(total, size=min(n_weights, total), replace=False)
    max_rel = 0.0
    for coord in coords:
        p_idx = 0
        offset = int(coord)
        while offset >= flat_sizes[p_idx]:
            offset -= flat_sizes[p_idx]
            p_idx += 1
        param = model.net.params[p_idx]
        orig = param.flat[offset]
        param.flat[offset] = orig + h
        loss_plus = _loss_only(model, u_seq, pde_values)
        param.flat[offset] = orig - h
        loss_minus = _loss_only(model, u_seq, pde_values)
        param.flat[offset] = orig
        g_fd = (loss_plus - loss_minus) / (2 * h)
        g_an = grads[p_idx].flat[offset]
        rel = abs(g_an - g_fd) / max(abs(g_an), abs(g_fd), 1e-4)
        max_rel = max(max_rel, rel)
    return max_rel


def _loss_only(model: SurrogateModel, u_seq: np.ndarray, pde_values: np.ndarray) -> float:
    b, n_steps_p1, n_x, n_c = u_seq.shape
    cond = model._require_norm().cond_normed(np.atleast_2d(pde_values))
    u = u_seq[:, 0]
    sq = 0.0
    for t in range(1, n_steps_p1):
        u, _, _ = model._step(u, cond, slot="fd", need_cache=False)
        e = u - u_seq[:, t]
        sq = sq + np.sum(e * e, axis=(1, 2))
        u = u.copy()  # pool buffer is reused by the next step
    denom = (n_steps_p1 - 1) * n_x * n_c
    rmse = np.sqrt(sq / denom + _RMSE_EPS)
    return float(rmse.mean())


@dataclass
class Ensemble:
    """N_m identically configured surrogates differing only in seed.

    Member 0 is the evaluation model: it alone is used to measure test errors
    and to produce latent features.
    """

    members: list[SurrogateModel] = field(default_factory=list)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def evaluation_model(self) -> SurrogateModel:
        return self.members[0]

    @classmethod
    def build(cls, n_members: int, n_c: int, n_params: int, hidden: int,
              seeds: list[int], residual_scale: float = 0.3) -> "Ensemble":
        if len(seeds) != n_members:
            raise ValueError("need one seed per member")
        return cls([SurrogateModel(n_c, n_params, hidden, residual_scale, seed=s)
                    for s in seeds])


# ------------------------------------------------------------- checkpoints

_CKPT_MAGIC = b"PDPSUR1\n"


def save_checkpoint(model: SurrogateModel, path: str) -> None:
    """Versioned binary blob: JSON header + little-endian f64 weight payload."""
    norm = model.norm
    header = {
        "version": 1,
        "arch": {"n_c": model.n_c, "n_params": model.n_params, "hidden": model.hidden,
                 "kernel_size": model.net.kernel_size,
                 "residual_scale": model.residual_scale},
        "norm": None if norm is None else {
            "sigma": norm.sigma.tolist(), "cond_lo": norm.cond_lo.tolist(),
            "cond_hi": norm.cond_hi.tolist()},
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
        "param_shapes": [list(p.shape) for p in model.net.params],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.net.params)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> SurrogateModel:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a surrogate checkpoint")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode())
        payload = fh.read()
    arch = header["arch"]
    model = SurrogateModel(arch["n_c"], arch["n_params"], arch["hidden"],
                           arch["residual_scale"], seed=header["seed"])
    offset = 0
    params = []
    for shape in header["param_shapes"]:
        size = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape)
        params.append(arr.astype(np.float64))
        offset += size * 8
    model.net.set_params(params)
    if header["norm"] is not None:
        norm = header["norm"]
        model.norm = NormStats(np.array(norm["sigma"]), np.array(norm["cond_lo"]),
                               np.array(norm["cond_hi"]))
    model.epochs_trained = header["epochs_trained"]
    return model
