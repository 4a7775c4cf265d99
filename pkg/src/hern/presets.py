"""Run configuration: validated JSON block with model, schedule and data
sections, plus the desk (CPU-sized) and paper presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainSchedule, TrainStage

_STAGE_KEYS = ("patch_size", "epochs", "learning_rate", "batch_size")
_DATA_KEYS = ("root", "count", "size", "gains", "sigma")
_RUN_KEYS = ("model", "schedule", "data", "seed", "output_dir")


@dataclass(frozen=True)
class DataConfig:
    root: str
    count: int = 8
    size: int = 32
    gains: tuple[float, float, float] = (2.0, 1.0, 1.5)
    sigma: float = 0.0

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "count": self.count,
            "size": self.size,
            "gains": list(self.gains),
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    schedule: TrainSchedule
    data: DataConfig
    seed: int = 0
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "schedule": [
                {k: getattr(s, k) for k in _STAGE_KEYS} for s in self.schedule.stages
            ],
            "data": self.data.to_dict(),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def run_config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("run config must be a JSON object")
    _check_keys(d, _RUN_KEYS, "run config")
    for key in ("model", "schedule", "data"):
        if key not in d:
            raise ConfigError(f"run config is missing the {key!r} section")
    stages = []
    for i, s in enumerate(d["schedule"]):
        _check_keys(s, _STAGE_KEYS, f"schedule stage {i}")
        stages.append(TrainStage(**s))
    _check_keys(d["data"], _DATA_KEYS, "data section")
    data = dict(d["data"])
    if "gains" in data:
        data["gains"] = tuple(data["gains"])
    return RunConfig(
        model=ModelConfig.from_dict(d["model"]),
        schedule=TrainSchedule(tuple(stages)),
        data=DataConfig(**data),
        seed=d.get("seed", 0),
        output_dir=d.get("output_dir", "runs/default"),
    )


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    return run_config_from_dict(raw)


def desk_config() -> ModelConfig:
    """Tiny architecture sized for single-core CPU experiments."""
    return ModelConfig(
        G=2, B=2, M=2, P=2, global_width=8, local_width=8,
        encoder_dim=8, fixed_res=16,
    )


def desk_preset(root: str = "data/desk", output_dir: str = "runs/desk") -> RunConfig:
    return RunConfig(
        model=desk_config(),
        schedule=TrainSchedule(
            (TrainStage(16, 200, 3e-3, 1), TrainStage(32, 400, 1e-3, 1))
        ),
        data=DataConfig(root=root, count=8, size=32, gains=(2.0, 1.0, 1.5), sigma=0.0),
        seed=0,
        output_dir=output_dir,
    )


def paper_preset(root: str = "data/full", output_dir: str = "runs/paper") -> RunConfig:
    return RunConfig(
        model=ModelConfig(),
        schedule=TrainSchedule.paper(),
        data=DataConfig(root=root, count=64, size=224, gains=(2.0, 1.0, 1.5), sigma=0.01),
        seed=0,
        output_dir=output_dir,
    )
