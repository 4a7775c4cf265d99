"""Binary checkpoint format.

Layout: magic b"HERN", u32 format version, u32 JSON header length, JSON header
(model config, optimizer step, stage/epoch cursor, tensor count), then the
tensors sorted by name. Each tensor: u16 name length, UTF-8 name, one dtype
tag byte (1 = float32), u8 rank, u32 dims, little-endian float32 data.

Optimizer moments are stored as tensors named ``opt.m/<param>`` and
``opt.v/<param>``. Saving after loading is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .model import HERN, ModelConfig

MAGIC = b"HERN"
FORMAT_VERSION = 1
_DTYPE_F32 = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray]
    opt_v: dict[str, np.ndarray]
    step: int
    stage_index: int
    epoch_index: int
    format_version: int = FORMAT_VERSION


def _write_tensor(out: bytearray, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    out += struct.pack("<H", len(nb))
    out += nb
    out += struct.pack("<BB", _DTYPE_F32, data.ndim)
    out += struct.pack(f"<{data.ndim}I", *data.shape)
    out += data.tobytes()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint file")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor(r: _Reader) -> tuple[str, np.ndarray]:
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    dtype, ndim = r.unpack("<BB")
    if dtype != _DTYPE_F32:
        raise CheckpointError(f"unknown dtype tag {dtype} for tensor {name!r}")
    shape = r.unpack(f"<{ndim}I")
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
    return name, data.copy()


def serialize_checkpoint(ckpt: Checkpoint) -> bytes:
    tensors = dict(ckpt.params)
    tensors.update({f"opt.m/{k}": v for k, v in ckpt.opt_m.items()})
    tensors.update({f"opt.v/{k}": v for k, v in ckpt.opt_v.items()})
    header = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "stage_index": ckpt.stage_index,
        "epoch_index": ckpt.epoch_index,
        "tensor_count": len(tensors),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", ckpt.format_version, len(hb))
    out += hb
    for name in sorted(tensors):
        _write_tensor(out, name, tensors[name])
    return bytes(out)


def deserialize_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    version, hlen = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version}, "
            f"expected {FORMAT_VERSION}"
        )
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from e
    config = ModelConfig.from_dict(header["config"])
    params: dict[str, np.ndarray] = {}
    opt_m: dict[str, np.ndarray] = {}
    opt_v: dict[str, np.ndarray] = {}
    for _ in range(header["tensor_count"]):
        name, arr = _read_tensor(r)
        if name.startswith("opt.m/"):
            opt_m[name[6:]] = arr
        elif name.startswith("opt.v/"):
            opt_v[name[6:]] = arr
        else:
            params[name] = arr
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after last tensor")
    return Checkpoint(
        config=config,
        params=params,
        opt_m=opt_m,
        opt_v=opt_v,
        step=header["step"],
        stage_index=header["stage_index"],
        epoch_index=header["epoch_index"],
        format_version=version,
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    data = serialize_checkpoint(ckpt)
    with open(path, "wb") as f:
        f.write(data)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return deserialize_checkpoint(f.read())


def apply_checkpoint(model: HERN, ckpt: Checkpoint) -> None:
    """Copy checkpoint parameters into a model, validating names and shapes.

    Raises CheckpointError naming the first offending tensor (sorted order)
    on any mismatch against the model built from the caller's config.
    """
    import torch

    state = dict(model.named_parameters())
    for name in sorted(set(state) | set(ckpt.params)):
        if name not in ckpt.params:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        if name not in state:
            raise CheckpointError(f"checkpoint has unexpected tensor {name!r}")
        want = tuple(state[name].shape)
        got = tuple(ckpt.params[name].shape)
        if want != got:
            raise CheckpointError(
                f"shape mismatch for tensor {name!r}: checkpoint has {got}, "
                f"model config requires {want}"
            )
    with torch.no_grad():
        for name, p in state.items():
            p.copy_(torch.from_numpy(ckpt.params[name]).to(p.dtype))


def model_from_checkpoint(ckpt: Checkpoint, config: ModelConfig | None = None) -> HERN:
    """Instantiate a model from a checkpoint; an explicit config must agree
    with the embedded tensor shapes."""
    model = HERN(config if config is not None else ckpt.config)
    apply_checkpoint(model, ckpt)
    return model
