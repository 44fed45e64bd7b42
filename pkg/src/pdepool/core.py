"""Shared tensor, grid, and candidate types used by every other module.

All field data lives in dense float64 arrays of shape (n_traj, n_t, n_x, n_c).
Grids are uniform and periodic: x_j = j * dx for j in [0, n_x), with no
duplicated endpoint. Types are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic 1D grid: n_x points on [0, length)."""

    n_x: int
    length: float
    dx: float

    @property
    def coords(self) -> np.ndarray:
        return np.arange(self.n_x, dtype=np.float64) * self.dx


def make_grid(n_x: int, length: float) -> Grid:
    if n_x < 8:
        raise ValueError(f"grid needs n_x >= 8, got {n_x}")
    if length <= 0:
        raise ValueError(f"grid length must be positive, got {length}")
    return Grid(n_x=int(n_x), length=float(length), dx=float(length) / int(n_x))


@dataclass(frozen=True)
class TimeAxis:
    """n_t stored snapshots including t=0, uniformly spaced on [0, t_final]."""

    n_t: int
    t_final: float

    def __post_init__(self):
        if self.n_t < 2:
            raise ValueError(f"time axis needs n_t >= 2, got {self.n_t}")
        if self.t_final <= 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")

    @property
    def dt_out(self) -> float:
        return self.t_final / (self.n_t - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t, dtype=np.float64) * self.dt_out


@dataclass(frozen=True)
class TrajectoryBatch:
    """Dense batch of solved or predicted fields, shape (n_traj, n_t, n_x, n_c)."""

    data: np.ndarray
    grid: Grid
    time: TimeAxis

    def __post_init__(self):
        d = self.data
        if d.ndim != 4:
            raise ValueError(f"trajectory data must be 4D (traj,t,x,c), got shape {d.shape}")
        if d.shape[1] != self.time.n_t:
            raise ValueError(f"time axis mismatch: data has {d.shape[1]} steps, axis {self.time.n_t}")
        if d.shape[2] != self.grid.n_x:
            raise ValueError(f"grid mismatch: data has {d.shape[2]} points, grid {self.grid.n_x}")

    @property
    def n_traj(self) -> int:
        return self.data.shape[0]

    @property
    def n_c(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class PDEParams:
    """PDE coefficient vector plus the normalized draw it came from.

    `values[i]` lies in the task range [a_i, b_i); `normed[i]` is the uniform
    [0,1) variate it was transformed from (identity or log scale).
    """

    values: np.ndarray
    normed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "normed", np.asarray(self.normed, dtype=np.float64))
        if self.values.shape != self.normed.shape:
            raise ValueError("values/normed length mismatch")


@dataclass(frozen=True)
class ICParams:
    """Parameters of one superposed-sine initial condition.

    Window coordinates x_left/x_right are fractions of the domain length;
    `normed` retains the underlying uniform draws in a fixed layout
    (amplitudes, wave numbers, phases, window flag, x_left, x_right, sign flip)
    so stratified designs can reproduce the same transform path.
    """

    amplitudes: np.ndarray
    wave_numbers: np.ndarray
    phases: np.ndarray
    window_flag: bool = False
    x_left: float = 0.0
    x_right: float = 1.0
    sign_flip: bool = False
    normed: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=np.float64))
        object.__setattr__(self, "wave_numbers", np.asarray(self.wave_numbers, dtype=np.int64))
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=np.float64))
        object.__setattr__(self, "normed", np.asarray(self.normed, dtype=np.float64))
        n_w = len(self.amplitudes)
        if len(self.wave_numbers) != n_w or len(self.phases) != n_w:
            raise ValueError("amplitude/wave-number/phase counts differ")
        if self.window_flag and not self.x_left < self.x_right:
            raise ValueError("windowed IC needs x_left < x_right")


@dataclass(frozen=True)
class SimInput:
    """One candidate: IC parameters, PDE parameters, realized u0, stable uid.

    `initial_field` is the IC realized on the training grid, shape (n_x, n_c);
    it is deterministically recomputable from (ic_params, grid).
    """

    ic_params: ICParams
    pde_params: PDEParams
    initial_field: np.ndarray
    uid: int

    def __post_init__(self):
        f = np.asarray(self.initial_field, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        object.__setattr__(self, "initial_field", f)


def downsample(traj: TrajectoryBatch, target_nt: int, target_nx: int) -> TrajectoryBatch:
    """Strided subsampling to a coarser stored resolution.

    Time keeps both endpoints (source n_t-1 must be divisible by target n_t-1);
    space keeps every (n_x / target_nx)-th point starting at x=0. Point
    selection, not averaging: on-grid values are preserved exactly.
    """
    n_t, n_x = traj.time.n_t, traj.grid.n_x
    if target_nt < 2 or (n_t - 1) % (target_nt - 1) != 0:
        raise ValueError(f"cannot stride {n_t} stored steps down to {target_nt}")
    if target_nx < 1 or n_x % target_nx != 0:
        raise ValueError(f"cannot stride {n_x} grid points down to {target_nx}")
    st = (n_t - 1) // (target_nt - 1)
    sx = n_x // target_nx
    data = np.ascontiguousarray(traj.data[:, ::st, ::sx, :])
    grid = make_grid(target_nx, traj.grid.length) if target_nx >= 8 else Grid(target_nx, traj.grid.length, traj.grid.length / target_nx)
    return TrajectoryBatch(data=data, grid=grid, time=TimeAxis(target_nt, traj.time.t_final))
