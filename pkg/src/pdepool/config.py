"""Experiment configuration schema: validated, defaulted, round-trippable.

Unknown keys are rejected everywhere, and validation errors carry the field
path (e.g. "strategy.m"). Defaults are the desk-scale setup: pool 8192, test
set 512, 64 initial trajectories, 3 AL iterations, hidden width 32, 250
epochs. Paper-scale values (pool 100000, 500 epochs, 2048 test trajectories,
sketch dimension 512) remain plain config choices.
"""

from __future__ import annotations

import json
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

STRATEGIES = ("random", "lhs", "topk", "sbal", "coreset", "lcmd", "bait")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StrategyConfig(_Strict):
    name: Literal["random", "lhs", "topk", "sbal", "coreset", "lcmd", "bait"]
    m: float = Field(default=1.0, ge=0.0)  # sbal sharpness
    metric: Literal["variance", "absolute"] = "variance"
    sketch_dim: int = Field(default=128, ge=1)
    feature_aggregation: Literal["spatial_mean", "full", "mid_layer", "mid_layer_mean"] = "spatial_mean"
    reg_lambda: Optional[float] = Field(default=None, gt=0.0)


class ScheduleConfig(_Strict):
    n_initial: int = Field(default=64, ge=1)
    n_iterations: int = Field(default=3, ge=0)
    growth: Union[Literal["exponential"], list[int]] = "exponential"

    @model_validator(mode="after")
    def _check_growth(self):
        if isinstance(self.growth, list):
            if len(self.growth) != self.n_iterations:
                raise ValueError("fixed growth list must have one batch size per iteration")
            if any(b < 1 for b in self.growth):
                raise ValueError("batch sizes must be positive")
        return self

    def batch_size(self, iteration: int, current_train_size: int) -> int:
        if self.growth == "exponential":
            return current_train_size
        return self.growth[iteration]


class ModelConfig(_Strict):
    hidden: int = Field(default=32, ge=1)
    ensemble_size: int = Field(default=2, ge=1)
    residual_scale: float = 0.3


class TrainSection(_Strict):
    epochs: int = Field(default=250, ge=0)
    batch_size: int = Field(default=512, ge=1)
    lr_max: float = Field(default=1e-3, gt=0)
    lr_min: float = Field(default=1e-5, gt=0)
    subtraj_steps: int = Field(default=2, ge=1)
    windows_per_traj: int = Field(default=1, ge=1)
    clip_factor: float = Field(default=5.0, gt=0)
    clip_warmup_epochs: int = Field(default=5, ge=0)
    clip_ema_decay: float = Field(default=0.99, ge=0, le=1)


class SolverSection(_Strict):
    cfl_safety: float = Field(default=0.4, gt=0, le=1)
    max_substeps: int = Field(default=1_000_000, ge=1)
    ks_etdrk4_contour_points: int = Field(default=32, ge=16)
    dealias: bool = True


class SeedsConfig(_Strict):
    pool: int = 1
    test: int = 2
    train: int = 3
    sketch: int = 4


class TraineeConfig(_Strict):
    hidden: int = Field(default=48, ge=1)
    seed: int = 1000


class ExperimentConfig(_Strict):
    task: Literal["burgers", "ks", "ce"]
    strategy: StrategyConfig
    schedule: ScheduleConfig = ScheduleConfig()
    model: ModelConfig = ModelConfig()
    train: TrainSection = TrainSection()
    solver: SolverSection = SolverSection()
    seeds: SeedsConfig = SeedsConfig()
    pool_size: int = Field(default=8192, ge=1)
    test_size: int = Field(default=512, ge=1)
    predict_chunk: int = Field(default=200, ge=1)
    output_dir: str = "runs"
    trainee: Optional[TraineeConfig] = None

    @model_validator(mode="after")
    def _check_budget(self):
        if self.schedule.n_initial > self.pool_size:
            raise ValueError("initial batch exceeds pool size")
        if self.strategy.name in ("topk", "sbal") and self.model.ensemble_size < 2:
            raise ValueError("uncertainty strategies need ensemble_size >= 2")
        return self

    def materialized(self) -> dict:
        return json.loads(self.model_dump_json())


class ConfigError(ValueError):
    pass


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.materialized(), fh, indent=2, sort_keys=True)
        fh.write("\n")
