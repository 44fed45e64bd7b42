"""Samplers for the test input distribution: PDE parameters and initial conditions.

Every candidate draws from its own Philox stream keyed by (seed, uid), so
sampling is order-independent, parallelizable, and resumable. Philox is
counter-based and platform-stable, which is what makes pool candidates
reproducible across machines.

All sampling goes through a normalized [0,1) vector that is retained on the
sampled objects. The deterministic transforms from normalized draws to actual
parameters (`params_from_normed`, `ic_params_from_normed`) are shared with the
Latin-hypercube path so both produce inputs on the same footing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, ICParams, PDEParams, SimInput

TWO_PI = 2.0 * np.pi


def candidate_rng(seed: int, uid: int) -> np.random.Generator:
    """Independent, platform-stable stream for one candidate."""
    key = np.array([seed, uid], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ParamSpec:
    """Per-dimension PDE parameter ranges [a_i, b_i) with uniform or log scale."""

    names: tuple
    lows: tuple
    highs: tuple
    scales: tuple

    def __post_init__(self):
        if not len(self.names) == len(self.lows) == len(self.highs) == len(self.scales):
            raise ValueError("param spec tuples must have equal length")
        for name, a, b, scale in zip(self.names, self.lows, self.highs, self.scales):
            if scale not in ("uniform", "log"):
                raise ValueError(f"{name}: unknown scale {scale!r}")
            if scale == "log" and not 0 < a < b:
                raise ValueError(f"{name}: log scale needs 0 < a < b, got [{a}, {b})")
            if scale == "uniform" and not a < b:
                raise ValueError(f"{name}: needs a < b, got [{a}, {b})")

    @property
    def n_dims(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ICSpec:
    """Settings of the superposed-sine IC generator.

    u0(x) = sum_i A_i sin(2 pi k_i x / L + phi_i), optionally zeroed outside a
    window [x_left, x_right] (fractions of L) and optionally sign-flipped.
    """

    n_waves: int
    k_lo: int
    k_hi: int  # exclusive: integers {k_lo, ..., k_hi - 1}
    amp_lo: float
    amp_hi: float
    window_prob: float = 0.0
    sign_flip_prob: float = 0.0
    x_left_range: tuple = (0.1, 0.45)
    x_right_range: tuple = (0.55, 0.9)

    def __post_init__(self):
        if self.n_waves < 1:
            raise ValueError("need at least one wave")
        if self.k_hi <= self.k_lo:
            raise ValueError("empty wave-number range")
        for p in (self.window_prob, self.sign_flip_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p}")

    @property
    def n_normed_dims(self) -> int:
        # amplitudes, wave numbers, phases, then window flag, x_left, x_right, sign flip
        return 3 * self.n_waves + 4


def transform_log(normed, a: float, b: float):
    """Map uniform [0,1) draws onto [a, b) on a logarithmic scale."""
    if a <= 0:
        raise ValueError(f"log scale needs a > 0, got {a}")
    if b <= a:
        raise ValueError(f"needs a < b, got [{a}, {b})")
    return a * np.exp(np.log(b / a) * np.asarray(normed))


def normed_from_value(value, a: float, b: float):
    """Inverse of transform_log."""
    return np.log(np.asarray(value) / a) / np.log(b / a)


def params_from_normed(spec: ParamSpec, normed: np.ndarray) -> np.ndarray:
    """Transform normalized draws (n, l) to parameter values per the spec scales."""
    normed = np.atleast_2d(np.asarray(normed, dtype=np.float64))
    values = np.empty_like(normed)
    for i, (a, b, scale) in enumerate(zip(spec.lows, spec.highs, spec.scales)):
        if scale == "log":
            values[:, i] = transform_log(normed[:, i], a, b)
        else:
            values[:, i] = a + normed[:, i] * (b - a)
    return values


def sample_pde_params(n: int, spec: ParamSpec, seed: int, uids=None) -> list[PDEParams]:
    if uids is None:
        uids = range(n)
    out = []
    for uid in uids:
        u = candidate_rng(seed, uid).random(spec.n_dims)
        out.append(PDEParams(values=params_from_normed(spec, u)[0], normed=u))
    return out


def ic_params_from_normed(spec: ICSpec, normed: np.ndarray) -> ICParams:
    """Deterministic transform from one normalized draw vector to ICParams.

    Layout: [A_1..A_Nw, k_1..k_Nw, phi_1..phi_Nw, window, x_left, x_right, flip].
    Discrete variables come from quantile mapping of their uniforms, so
    stratified designs stratify them too.
    """
    normed = np.asarray(normed, dtype=np.float64)
    if normed.shape != (spec.n_normed_dims,):
        raise ValueError(f"expected {spec.n_normed_dims} normalized dims, got {normed.shape}")
    nw = spec.n_waves
    u_amp, u_k, u_phi = normed[:nw], normed[nw:2 * nw], normed[2 * nw:3 * nw]
    u_win, u_xl, u_xr, u_flip = normed[3 * nw:]
    amps = spec.amp_lo + u_amp * (spec.amp_hi - spec.amp_lo)
    ks = spec.k_lo + np.floor(u_k * (spec.k_hi - spec.k_lo)).astype(np.int64)
    phis = u_phi * TWO_PI
    window = bool(u_win < spec.window_prob)
    xl = spec.x_left_range[0] + u_xl * (spec.x_left_range[1] - spec.x_left_range[0])
    xr = spec.x_right_range[0] + u_xr * (spec.x_right_range[1] - spec.x_right_range[0])
    flip = bool(u_flip < spec.sign_flip_prob)
    return ICParams(
        amplitudes=amps, wave_numbers=ks, phases=phis,
        window_flag=window, x_left=float(xl), x_right=float(xr),
        sign_flip=flip, normed=normed,
    )


def sample_ic_params(n: int, spec: ICSpec, seed: int, uids=None) -> list[ICParams]:
    if uids is None:
        uids = range(n)
    out = []
    for uid in uids:
        rng = candidate_rng(seed, uid)
        out.append(ic_params_from_normed(spec, rng.random(spec.n_normed_dims)))
    return out


def realize_ic(ic: ICParams, grid: Grid) -> np.ndarray:
    """Evaluate the IC on the grid. Pure: repeated calls agree bit-exactly.

    Uses fractional coordinates x/L = j/n_x, so the same parameters give the
    same on-grid values at any resolution whose points coincide.
    """
    xfrac = np.arange(grid.n_x, dtype=np.float64) / grid.n_x
    u0 = np.zeros(grid.n_x, dtype=np.float64)
    for amp, k, phi in zip(ic.amplitudes, ic.wave_numbers, ic.phases):
        u0 += amp * np.sin(TWO_PI * k * xfrac + phi)
    if ic.window_flag:
        u0 = u0 * ((xfrac >= ic.x_left) & (xfrac <= ic.x_right))
    if ic.sign_flip:
        u0 = -u0
    return u0


def make_sim_input(ic: ICParams, pde: PDEParams, grid: Grid, uid: int) -> SimInput:
    return SimInput(ic_params=ic, pde_params=pde, initial_field=realize_ic(ic, grid), uid=uid)


def sample_sim_inputs(n: int, param_spec: ParamSpec, ic_spec: ICSpec,
                      grid: Grid, seed: int, uid_offset: int = 0) -> list[SimInput]:
    """Draw n candidates from the input distribution, one stream per candidate.

    Each candidate consumes its PDE draws first, then its IC draws, from the
    stream keyed by (seed, uid). uid_offset tags the stream family (pool, test,
    design) so uid sets stay disjoint.
    """
    out = []
    for i in range(n):
        uid = uid_offset + i
        rng = candidate_rng(seed, uid)
        u_pde = rng.random(param_spec.n_dims)
        pde = PDEParams(values=params_from_normed(param_spec, u_pde)[0], normed=u_pde)
        ic = ic_params_from_normed(ic_spec, rng.random(ic_spec.n_normed_dims))
        out.append(make_sim_input(ic, pde, grid, uid))
    return out


# uid stream tags: high byte separates candidate families
UID_POOL = 1 << 56
UID_TEST = 2 << 56
UID_DESIGN = 3 << 56
