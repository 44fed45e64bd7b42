"""Pool-based active learning for autoregressive neural PDE surrogates."""

__version__ = "0.1.0"

from .core import Grid, ICParams, PDEParams, SimInput, TimeAxis, TrajectoryBatch, downsample, make_grid
from .tasks import TaskSpec, get_task

__all__ = [
    "Grid", "TimeAxis", "TrajectoryBatch", "PDEParams", "ICParams", "SimInput",
    "make_grid", "downsample", "TaskSpec", "get_task", "__version__",
]
