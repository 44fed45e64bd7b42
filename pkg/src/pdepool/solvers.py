"""Ground-truth numerical solvers for the three 1D periodic PDE tasks.

Burgers runs a conservative finite-difference scheme: MUSCL linear
reconstruction with the monotonized-central limiter, local Lax-Friedrichs
interface fluxes for the advection term, second-order central differences for
diffusion, and explicit SSP-RK2 substeps under the combined CFL/diffusion
limit.

KS and CE run a pseudo-spectral method of lines with exact linear propagation
via ETDRK4; the phi-function coefficients are evaluated with the
Kassam-Trefethen complex contour trick, and the quadratic term is dealiased
with the 2/3 rule.

Substep sizes divide each output interval evenly, so snapshot times are hit
exactly with no temporal interpolation. Trajectories in a batch never
interact: each one picks its own substep counts, so results are bit-identical
regardless of batch composition. Failures (NaN, substep budget) set a
per-trajectory flag instead of aborting the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, SimInput, TimeAxis, TrajectoryBatch, downsample
from .generators import realize_ic
from .tasks import TaskSpec, get_task


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    cfl_safety: float = 0.4
    max_substeps: int = 1_000_000
    ks_etdrk4_contour_points: int = 32
    dealias: bool = True

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}")
        if self.ks_etdrk4_contour_points < 16:
            raise ValueError("need at least 16 contour points")


def _realize_batch(inputs: list[SimInput], grid: Grid) -> np.ndarray:
    if not inputs:
        return np.zeros((0, grid.n_x), dtype=np.float64)
    return np.stack([realize_ic(inp.ic_params, grid) for inp in inputs])


def _wrap(fields: np.ndarray, grid: Grid, time: TimeAxis) -> TrajectoryBatch:
    return TrajectoryBatch(data=fields[:, :, :, None], grid=grid, time=time)


# ---------------------------------------------------------------------------
# Burgers: u_t + u u_x = (nu/pi) u_xx, finite differences
# ---------------------------------------------------------------------------

def _mc_slopes(u: np.ndarray) -> np.ndarray:
    # monotonized-central limited slopes, periodic
    fwd = np.roll(u, -1, axis=-1) - u
    bwd = u - np.roll(u, 1, axis=-1)
    central = 0.5 * (fwd + bwd)
    same_sign = (fwd * bwd) > 0
    lim = np.minimum(np.abs(central), 2.0 * np.minimum(np.abs(fwd), np.abs(bwd)))
    return np.where(same_sign, np.sign(central) * lim, 0.0)


def _burgers_rhs(u: np.ndarray, diff_coef: np.ndarray, dx: float) -> np.ndarray:
    slopes = _mc_slopes(u)
    # interface i+1/2: left state from cell i, right state from cell i+1
    u_left = u + 0.5 * slopes
    u_right = np.roll(u, -1, axis=-1) - 0.5 * np.roll(slopes, -1, axis=-1)
    wave = np.maximum(np.abs(u_left), np.abs(u_right))
    flux = 0.25 * (u_left**2 + u_right**2) - 0.5 * wave * (u_right - u_left)
    adv = (flux - np.roll(flux, 1, axis=-1)) / dx
    lap = (np.roll(u, -1, axis=-1) - 2.0 * u + np.roll(u, 1, axis=-1)) / dx**2
    return -adv + diff_coef * lap


def solve_burgers_fields(u0: np.ndarray, nu: np.ndarray, grid: Grid, time: TimeAxis,
                         cfg: SolverConfig = SolverConfig()):
    """March a batch of raw initial fields. Returns (fields (B,n_t,n_x), failed)."""
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    nu = np.atleast_1d(np.asarray(nu, dtype=np.float64))
    n_traj = u0.shape[0]
    diff = (nu / np.pi)[:, None]
    dx = grid.dx
    out = np.zeros((n_traj, time.n_t, grid.n_x), dtype=np.float64)
    out[:, 0] = u0
    failed = np.zeros(n_traj, dtype=bool)
    if n_traj == 0:
        return out, failed

    u = u0.copy()
    budget = np.full(n_traj, cfg.max_substeps, dtype=np.int64)
    dt_out = time.dt_out
    alive = ~failed
    for step in range(1, time.n_t):
        umax = np.max(np.abs(u), axis=-1)
        dt_adv = np.where(umax > 0, dx / np.maximum(umax, 1e-300), np.inf)
        dt_dif = dx**2 / (2.0 * diff[:, 0])
        dt_stable = cfg.cfl_safety * np.minimum(dt_adv, dt_dif)
        n_sub = np.maximum(np.ceil(dt_out / dt_stable), 1.0).astype(np.int64)
        over = alive & (budget < n_sub)
        failed |= over
        alive = alive & ~over
        budget[alive] -= n_sub[alive]
        dt = dt_out / n_sub
        max_sub = int(n_sub[alive].max()) if alive.any() else 0
        for s in range(max_sub):
            act = alive & (s < n_sub)
            if not act.any():
                break
            ua, da, dta = u[act], diff[act], dt[act, None]
            u1 = ua + dta * _burgers_rhs(ua, da, dx)
            u[act] = 0.5 * (ua + u1 + dta * _burgers_rhs(u1, da, dx))
        bad = alive & ~np.all(np.isfinite(u), axis=-1)
        failed |= bad
        alive = alive & ~bad
        out[alive, step] = u[alive]
    out[failed] = 0.0
    return out, failed


def solve_burgers(inputs: list[SimInput], grid: Grid, time: TimeAxis,
                  cfg: SolverConfig = SolverConfig()):
    u0 = _realize_batch(inputs, grid)
    nu = np.array([inp.pde_params.values[0] for inp in inputs], dtype=np.float64)
    fields, failed = solve_burgers_fields(u0, nu, grid, time, cfg)
    return _wrap(fields, grid, time), failed


# ---------------------------------------------------------------------------
# KS and CE: pseudo-spectral ETDRK4
# ---------------------------------------------------------------------------

def _etdrk4_tables(lin: np.ndarray, h: float, n_contour: int):
    """phi-function coefficient tables via contour averaging around h*L.

    Full-circle contour keeps the evaluation valid for complex linear
    operators (the dispersive CE term); for real operators the imaginary
    residue is at rounding level.
    """
    z = h * lin.astype(np.complex128)
    r = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
    zr = z[..., None] + r
    ez = np.exp(zr)
    q = h * np.mean((np.exp(zr / 2.0) - 1.0) / zr, axis=-1)
    f1 = h * np.mean((-4.0 - zr + ez * (4.0 - 3.0 * zr + zr**2)) / zr**3, axis=-1)
    f2 = h * np.mean((2.0 + zr + ez * (-2.0 + zr)) / zr**3, axis=-1)
    f3 = h * np.mean((-4.0 - 3.0 * zr - zr**2 + ez * (4.0 - zr)) / zr**3, axis=-1)
    e_full = np.exp(z)
    e_half = np.exp(z / 2.0)
    if np.isrealobj(lin):
        q, f1, f2, f3 = q.real, f1.real, f2.real, f3.real
        e_full, e_half = e_full.real, e_half.real
    return e_full, e_half, q, f1, f2, f3


def _etdrk4_solve(u0, lin, nonlin, speed_of, time, cfg, fixed_substeps=None):
    """Generic batched ETDRK4 march in rfft space.

    lin: (B, K) linear symbol per candidate. nonlin(v) -> (B, K) spectral
    tendency of the quadratic term (already dealiased). speed_of(u) -> (B,)
    advection-speed scale that, against the largest retained wavenumber, sets
    the per-interval substep count. fixed_substeps overrides the adaptive rule
    (used for time-refinement studies).
    """
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    n_traj, n_x = u0.shape
    out = np.zeros((n_traj, time.n_t, n_x), dtype=np.float64)
    out[:, 0] = u0
    failed = np.zeros(n_traj, dtype=bool)
    if n_traj == 0:
        return out, failed

    dt_out = time.dt_out
    v = np.fft.rfft(u0, axis=-1)
    budget = np.full(n_traj, cfg.max_substeps, dtype=np.int64)
    alive = np.ones(n_traj, dtype=bool)
    # coefficient tables are cached per substep count seen so far
    tables: dict[int, tuple] = {}

    def step_rows(rows, n_sub):
        if n_sub not in tables:
            tables[n_sub] = _etdrk4_tables(lin, dt_out / n_sub, cfg.ks_etdrk4_contour_points)
        e, e2, q, f1, f2, f3 = (t[rows] for t in tables[n_sub])
        vr = v[rows]
        for _ in range(n_sub):
            nv = nonlin(vr, rows)
            a = e2 * vr + q * nv
            na = nonlin(a, rows)
            b = e2 * vr + q * na
            nb = nonlin(b, rows)
            c = e2 * a + q * (2.0 * nb - nv)
            nc = nonlin(c, rows)
            vr = e * vr + f1 * nv + 2.0 * f2 * (na + nb) + f3 * nc
        v[rows] = vr

    for step in range(1, time.n_t):
        u_now = np.fft.irfft(v, n=n_x, axis=-1)
        if fixed_substeps is not None:
            n_sub = np.full(n_traj, int(fixed_substeps), dtype=np.int64)
        else:
            dt_nl = cfg.cfl_safety / np.maximum(speed_of(u_now), 1e-12)
            n_sub = np.maximum(np.ceil(dt_out / dt_nl), 1.0).astype(np.int64)
        over = alive & (budget < n_sub)
        failed |= over
        alive = alive & ~over
        budget[alive] -= n_sub[alive]
        for cnt in np.unique(n_sub[alive]):
            rows = np.flatnonzero(alive & (n_sub == cnt))
            step_rows(rows, int(cnt))
        u_next = np.fft.irfft(v, n=n_x, axis=-1)
        bad = alive & ~np.all(np.isfinite(u_next), axis=-1)
        failed |= bad
        alive = alive & ~bad
        out[alive, step] = u_next[alive]
    out[failed] = 0.0
    return out, failed


def _dealias_mask(n_x: int, enabled: bool) -> np.ndarray:
    k_index = np.arange(n_x // 2 + 1)
    if not enabled:
        return np.ones_like(k_index, dtype=np.float64)
    return (k_index <= n_x // 3).astype(np.float64)


def solve_ks_fields(u0: np.ndarray, nu: np.ndarray, length: np.ndarray,
                    time: TimeAxis, cfg: SolverConfig = SolverConfig(),
                    fixed_substeps=None):
    """KS on per-candidate domain lengths; fields live on the normalized grid."""
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    nu = np.atleast_1d(np.asarray(nu, dtype=np.float64))[:, None]
    length = np.atleast_1d(np.asarray(length, dtype=np.float64))[:, None]
    n_x = u0.shape[1]
    k = 2.0 * np.pi * np.arange(n_x // 2 + 1, dtype=np.float64) / length  # (B, K)
    mask = _dealias_mask(n_x, cfg.dealias)
    lin = k**2 - nu * k**4
    ik = 1j * k * mask
    k_max = (k * mask).max(axis=-1)

    def nonlin(v, rows):
        u = np.fft.irfft(v, n=n_x, axis=-1)
        return -0.5 * ik[rows] * np.fft.rfft(u * u, axis=-1)

    def speed_of(u):
        return np.max(np.abs(u), axis=-1) * k_max

    return _etdrk4_solve(u0, lin, nonlin, speed_of, time, cfg, fixed_substeps)


def solve_ks(inputs: list[SimInput], grid: Grid, time: TimeAxis,
             cfg: SolverConfig = SolverConfig(), fixed_substeps=None):
    u0 = _realize_batch(inputs, grid)
    nu = np.array([inp.pde_params.values[0] for inp in inputs], dtype=np.float64)
    length = np.array([inp.pde_params.values[1] for inp in inputs], dtype=np.float64)
    fields, failed = solve_ks_fields(u0, nu, length, time, cfg, fixed_substeps)
    return _wrap(fields, grid, time), failed


def solve_ce_fields(u0: np.ndarray, alpha, beta, gamma, grid: Grid, time: TimeAxis,
                    cfg: SolverConfig = SolverConfig(), fixed_substeps=None):
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))[:, None]
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))[:, None]
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))[:, None]
    n_x = u0.shape[1]
    k = 2.0 * np.pi * np.arange(n_x // 2 + 1, dtype=np.float64) / grid.length
    mask = _dealias_mask(n_x, cfg.dealias)
    lin = -beta * k**2 + 1j * gamma * k**3
    ik_masked = 1j * k * mask
    k_max = (k * mask).max()

    def nonlin(v, rows):
        u = np.fft.irfft(v, n=n_x, axis=-1)
        return -alpha[rows] * ik_masked * np.fft.rfft(u * u, axis=-1)

    def speed_of(u):
        # flux alpha*u^2 has characteristic speed 2*alpha*|u|
        return 2.0 * alpha[:, 0] * np.max(np.abs(u), axis=-1) * k_max

    return _etdrk4_solve(u0, lin, nonlin, speed_of, time, cfg, fixed_substeps)


def solve_ce(inputs: list[SimInput], grid: Grid, time: TimeAxis,
             cfg: SolverConfig = SolverConfig(), fixed_substeps=None):
    u0 = _realize_batch(inputs, grid)
    params = np.array([inp.pde_params.values for inp in inputs], dtype=np.float64)
    if len(inputs) == 0:
        params = np.zeros((0, 3))
    fields, failed = solve_ce_fields(u0, params[:, 0], params[:, 1], params[:, 2],
                                     grid, time, cfg, fixed_substeps)
    return _wrap(fields, grid, time), failed


# ---------------------------------------------------------------------------
# Dispatch at simulation resolution, downsample to training resolution
# ---------------------------------------------------------------------------

_SOLVERS = {"burgers": solve_burgers, "ks": solve_ks, "ce": solve_ce}


def solve_batch(task, inputs: list[SimInput], cfg: SolverConfig = SolverConfig()):
    """Solve candidates at simulation resolution, return at training resolution.

    Returns (TrajectoryBatch, failed mask). Raises SolverError if every
    trajectory of a non-empty batch failed.
    """
    spec: TaskSpec = get_task(task) if isinstance(task, str) else task
    solver = _SOLVERS[spec.name]
    traj, failed = solver(inputs, spec.sim_grid(), spec.sim_time(), cfg)
    if len(inputs) > 0 and failed.all():
        raise SolverError(f"all {len(inputs)} trajectories failed in {spec.name} solve")
    return downsample(traj, spec.train_nt, spec.train_nx), failed
