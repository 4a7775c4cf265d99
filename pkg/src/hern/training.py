"""L1 training loop: Adam optimizer, progressive-resolution schedule,
per-epoch checkpointing and a CSV metrics timeline.

Each stage trains the same parameters on larger random crops; nothing is
re-initialized at stage boundaries and the optimizer state is carried over.
Every random decision (shuffle, crop offset, flips) derives from the run seed
and the (stage, epoch, sample) coordinates, so training is deterministic and
resuming from any epoch checkpoint replays the original trajectory.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .cfa import PairedSample, flip_pair, random_crop_pair
from .checkpoint import Checkpoint, save_checkpoint
from .errors import ConfigError, TrainingError
from .model import HERN

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# checkpoints kept on disk: the best epoch plus the most recent K
RETAIN_LAST = 5

METRICS_COLUMNS = ("stage", "epoch", "mean_l1", "lr", "patch_size", "wall_seconds")


@dataclass(frozen=True)
class TrainStage:
    patch_size: int
    epochs: int
    learning_rate: float
    batch_size: int

    def __post_init__(self):
        if self.patch_size % 4:
            raise ConfigError(f"patch_size must be divisible by 4, got {self.patch_size}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        # zero is allowed so frozen stages can exercise the weight-carry contract
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")


@dataclass(frozen=True)
class TrainSchedule:
    stages: tuple[TrainStage, ...]

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("schedule must have at least one stage")
        sizes = [s.patch_size for s in self.stages]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError(f"patch sizes must be strictly increasing, got {sizes}")

    @classmethod
    def paper(cls) -> "TrainSchedule":
        return cls(
            (
                TrainStage(72, 48, 1e-4, 16),
                TrainStage(144, 36, 1e-5, 4),
                TrainStage(192, 24, 1e-5, 2),
                TrainStage(224, 8, 1e-5, 2),
            )
        )


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over batch, pixels and channels."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


@dataclass
class AdamState:
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    step: int = 0


def init_adam_state(params: dict[str, torch.Tensor]) -> AdamState:
    return AdamState(
        m={k: torch.zeros_like(p) for k, p in params.items()},
        v={k: torch.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    with torch.no_grad():
        for name in params:
            g = grads[name]
            if g.shape != params[name].shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if torch.isnan(g).any():
                raise TrainingError(f"NaN gradient in parameter {name!r}")
            m = state.m[name]
            v = state.v[name]
            m.mul_(beta1).add_(g, alpha=1 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            m_hat = m / (1 - beta1**t)
            v_hat = v / (1 - beta2**t)
            params[name].sub_(lr * m_hat / (v_hat.sqrt() + eps))


class CheckpointKeeper:
    """Writes per-epoch checkpoints, pruning to the last few plus the best."""

    def __init__(self, directory: Path, retain_last: int = RETAIN_LAST):
        self.directory = Path(directory)
        self.retain_last = retain_last
        self.recent: list[Path] = []
        self.best_path: Path | None = None
        self.best_loss = float("inf")

    def save(self, ckpt: Checkpoint, mean_loss: float) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"stage{ckpt.stage_index}_epoch{ckpt.epoch_index}.ckpt"
        save_checkpoint(ckpt, path)
        self.recent.append(path)
        if mean_loss < self.best_loss:
            self.best_loss = mean_loss
            self.best_path = path
        while len(self.recent) > self.retain_last:
            old = self.recent.pop(0)
            if old != self.best_path and old.exists():
                old.unlink()
        return path


def _sample_rng(seed: int, stage_index: int, epoch: int, sample_index: int):
    return np.random.default_rng([seed, stage_index, epoch, sample_index])


def _prepare_batch(
    dataset: list[PairedSample],
    indices,
    patch_size: int,
    seed: int,
    stage_index: int,
    epoch: int,
    dtype: torch.dtype,
) -> tuple[torch.Tensor, torch.Tensor]:
    raws, rgbs = [], []
    for idx in indices:
        rng = _sample_rng(seed, stage_index, epoch, int(idx))
        sample = random_crop_pair(
            dataset[idx], patch_size, int(rng.integers(0, 2**32))
        )
        sample = flip_pair(sample, bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
        raws.append(sample.raw.data.transpose(2, 0, 1))
        rgbs.append(sample.rgb.data.transpose(2, 0, 1))
    x = torch.from_numpy(np.stack(raws)).to(dtype)
    y = torch.from_numpy(np.stack(rgbs)).to(dtype)
    return x, y


def _make_checkpoint(model: HERN, state: AdamState, stage_index: int, epoch: int) -> Checkpoint:
    params = {k: p.detach().cpu().numpy().astype(np.float32) for k, p in model.named_parameters()}
    return Checkpoint(
        config=model.config,
        params=params,
        opt_m={k: t.cpu().numpy().astype(np.float32) for k, t in state.m.items()},
        opt_v={k: t.cpu().numpy().astype(np.float32) for k, t in state.v.items()},
        step=state.step,
        stage_index=stage_index,
        epoch_index=epoch,
    )


def train_stage(
    model: HERN,
    dataset: list[PairedSample],
    stage: TrainStage,
    seed: int,
    stage_index: int = 0,
    state: AdamState | None = None,
    keeper: CheckpointKeeper | None = None,
    start_epoch: int = 0,
) -> tuple[AdamState, list[dict]]:
    """Train one stage; returns the optimizer state and per-epoch metrics."""
    if not dataset:
        raise TrainingError("empty dataset")
    for s in dataset:
        if s.raw.height < stage.patch_size or s.raw.width < stage.patch_size:
            raise TrainingError(
                f"dataset sample smaller than patch size {stage.patch_size}"
            )
    torch.set_num_threads(1)  # keep CPU training bit-deterministic
    params = dict(model.named_parameters())
    dtype = next(iter(params.values())).dtype
    if state is None:
        state = init_adam_state(params)
    metrics: list[dict] = []
    for epoch in range(start_epoch, stage.epochs):
        t0 = time.perf_counter()
        shuffle_rng = np.random.default_rng([seed, stage_index, epoch])
        order = shuffle_rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), stage.batch_size):
            batch = order[start : start + stage.batch_size]
            x, y = _prepare_batch(
                dataset, batch, stage.patch_size, seed, stage_index, epoch, dtype
            )
            model.zero_grad(set_to_none=True)
            loss = l1_loss(model(x), y)
            if torch.isnan(loss):
                raise TrainingError(
                    f"loss became NaN at stage {stage_index} epoch {epoch}; "
                    "last checkpoint kept"
                )
            loss.backward()
            grads = {k: p.grad for k, p in params.items()}
            adam_step(params, grads, state, stage.learning_rate)
            losses.append(float(loss.detach()))
        mean_l1 = float(np.mean(losses))
        row = {
            "stage": stage_index,
            "epoch": epoch,
            "mean_l1": mean_l1,
            "lr": stage.learning_rate,
            "patch_size": stage.patch_size,
            "wall_seconds": time.perf_counter() - t0,
        }
        metrics.append(row)
        if keeper is not None:
            keeper.save(_make_checkpoint(model, state, stage_index, epoch), mean_l1)
    return state, metrics


def adam_state_from_checkpoint(ckpt: Checkpoint, model: HERN) -> AdamState:
    """Rebuild the optimizer state saved alongside a model's parameters."""
    dtype = next(model.parameters()).dtype
    return AdamState(
        m={k: torch.from_numpy(v).to(dtype) for k, v in ckpt.opt_m.items()},
        v={k: torch.from_numpy(v).to(dtype) for k, v in ckpt.opt_v.items()},
        step=ckpt.step,
    )


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def progressive_train(
    model: HERN,
    dataset: list[PairedSample],
    schedule: TrainSchedule,
    seed: int,
    out_dir=None,
    resume_cursor: tuple[int, int] | None = None,
    state: AdamState | None = None,
) -> list[dict]:
    """Run the stages in order, carrying parameters and optimizer state across
    stage boundaries unchanged. Returns the stage-tagged metrics timeline."""
    keeper = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        keeper = CheckpointKeeper(out_dir / "checkpoints")
    if state is None:
        state = init_adam_state(dict(model.named_parameters()))
    start_stage, start_epoch = (0, 0)
    if resume_cursor is not None:
        start_stage, start_epoch = resume_cursor
    timeline: list[dict] = []
    for stage_index, stage in enumerate(schedule.stages):
        if stage_index < start_stage:
            continue
        first_epoch = start_epoch if stage_index == start_stage else 0
        if first_epoch >= stage.epochs:
            continue
        state, rows = train_stage(
            model,
            dataset,
            stage,
            seed,
            stage_index=stage_index,
            state=state,
            keeper=keeper,
            start_epoch=first_epoch,
        )
        timeline.extend(rows)
        if out_dir is not None:
            write_metrics_csv(timeline, out_dir / "metrics.csv")
    return timeline
