"""Task registry: the three 1D periodic PDE benchmarks and their input distributions.

Each task bundles the PDE coefficient ranges, the IC generator settings, and
the simulation/training resolutions. Simulation runs at the fine resolution
and is strided down to the training resolution before anything downstream
sees it.

    burgers   u_t + u u_x = (nu/pi) u_xx             x in [0,1),  T=2
    ks        u_t + u u_x + u_xx + nu u_xxxx = 0     x in [0,L),  T=40
    ce        u_t + (alpha u^2 - beta u_x + gamma u_xx)_x = 0   x in [0,16), T=4

KS varies the domain length per candidate; its fields are stored on the
normalized unit grid (the sine ICs depend only on x/L, so realization is
identical there) and L enters the solver through the PDE parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Grid, TimeAxis, make_grid
from .generators import ICSpec, ParamSpec


@dataclass(frozen=True)
class TaskSpec:
    name: str
    param_spec: ParamSpec
    ic_spec: ICSpec
    sim_nt: int
    sim_nx: int
    train_nt: int
    train_nx: int
    t_final: float
    domain_length: float  # for ks this is the normalized storage length

    def sim_grid(self) -> Grid:
        return make_grid(self.sim_nx, self.domain_length)

    def train_grid(self) -> Grid:
        return make_grid(self.train_nx, self.domain_length)

    def sim_time(self) -> TimeAxis:
        return TimeAxis(self.sim_nt, self.t_final)

    def train_time(self) -> TimeAxis:
        return TimeAxis(self.train_nt, self.t_final)


_TASKS = {
    "burgers": TaskSpec(
        name="burgers",
        param_spec=ParamSpec(names=("nu",), lows=(0.001,), highs=(1.0,), scales=("log",)),
        ic_spec=ICSpec(
            n_waves=2, k_lo=1, k_hi=5, amp_lo=0.0, amp_hi=1.0,
            window_prob=0.1, sign_flip_prob=0.1,
            x_left_range=(0.1, 0.45), x_right_range=(0.55, 0.9),
        ),
        sim_nt=201, sim_nx=1024, train_nt=41, train_nx=256,
        t_final=2.0, domain_length=1.0,
    ),
    "ks": TaskSpec(
        name="ks",
        param_spec=ParamSpec(
            names=("nu", "domain_length"),
            lows=(0.5, 0.1), highs=(4.0, 100.0), scales=("uniform", "uniform"),
        ),
        ic_spec=ICSpec(n_waves=10, k_lo=1, k_hi=10, amp_lo=-1.0, amp_hi=1.0),
        sim_nt=801, sim_nx=512, train_nt=41, train_nx=256,
        t_final=40.0, domain_length=1.0,
    ),
    "ce": TaskSpec(
        name="ce",
        param_spec=ParamSpec(
            names=("alpha", "beta", "gamma"),
            lows=(0.0, 0.0, 0.0), highs=(3.0, 0.4, 1.0),
            scales=("uniform", "uniform", "uniform"),
        ),
        ic_spec=ICSpec(n_waves=5, k_lo=1, k_hi=3, amp_lo=-0.4, amp_hi=0.4),
        sim_nt=501, sim_nx=64, train_nt=51, train_nx=64,
        t_final=4.0, domain_length=16.0,
    ),
}

TASK_NAMES = tuple(_TASKS)


def get_task(name: str) -> TaskSpec:
    try:
        return _TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}, expected one of {TASK_NAMES}") from None
