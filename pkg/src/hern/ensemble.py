"""Test-time ensembling: averaging over the flip group and over checkpoints.

Averaging a predictor over the four flips (identity, horizontal, vertical,
both), with the inverse flip applied to each output, yields a flip-equivariant
map. Accumulation happens in unclamped float64; clamp only when writing
images. Checkpoint averaging is order-canonical so it is permutation
invariant bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cfa import RawPatch
from .checkpoint import Checkpoint, model_from_checkpoint
from .errors import ParameterError
from .model import infer_padded

ModelFn = Callable[[RawPatch], np.ndarray]

FLIPS = ((False, False), (True, False), (False, True), (True, True))


@dataclass(frozen=True)
class FlipTransform:
    horizontal: bool
    vertical: bool

    def apply(self, image: np.ndarray) -> np.ndarray:
        # self-inverse, so apply() also undoes the transform
        axes = []
        if self.vertical:
            axes.append(0)
        if self.horizontal:
            axes.append(1)
        return np.flip(image, axis=axes).copy() if axes else image


def self_ensemble(model_fn: ModelFn, raw: RawPatch) -> np.ndarray:
    """Average model_fn over the flip group with inverse flips on outputs."""
    acc = None
    for h, v in FLIPS:
        t = FlipTransform(h, v)
        out = t.apply(model_fn(RawPatch(t.apply(raw.data))))
        acc = out.astype(np.float64) if acc is None else acc + out
    return (acc / len(FLIPS)).astype(np.float32)


def epoch_ensemble(
    checkpoints: list[Checkpoint], raw: RawPatch, self_ens: bool = False
) -> np.ndarray:
    """Average predictions of several checkpoints of the same config."""
    if not checkpoints:
        raise ParameterError("epoch_ensemble needs at least one checkpoint")
    first = checkpoints[0].config
    for ckpt in checkpoints[1:]:
        if ckpt.config != first:
            raise ParameterError("checkpoints have mismatched model configs")
    # canonical order makes the accumulation permutation invariant bit-exactly
    ordered = sorted(checkpoints, key=lambda c: (c.stage_index, c.epoch_index, c.step))
    acc = None
    for ckpt in ordered:
        model = model_from_checkpoint(ckpt)
        fn = lambda r: infer_padded(model, r)
        out = self_ensemble(fn, raw) if self_ens else fn(raw)
        acc = out.astype(np.float64) if acc is None else acc + out
    return (acc / len(ordered)).astype(np.float32)
