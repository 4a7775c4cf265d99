"""Dual-path demosaicing network with a fixed-resolution full-image encoder.

The network maps a packed 4-channel RAW patch to an RGB image. A head conv
lifts the input to feature space; a global path runs a deep residual trunk at
quarter resolution between a strided encoder and a transposed-conv decoder; a
local path runs multi-scale residual blocks at full resolution; a pyramid
encoder summarizes the whole (bilinearly resized) input into one vector that
is broadcast-added to the fused features before reconstruction.

Parameter shapes depend only on the config, never on input resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .cfa import RawPatch
from .errors import ConfigError, DimensionError

CONFIG_KEYS = (
    "G",
    "B",
    "M",
    "P",
    "global_width",
    "local_width",
    "encoder_dim",
    "fixed_res",
    "output_scale",
    "prelu_init",
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; the default values are the full model."""

    G: int = 16  # residual groups in the global path
    B: int = 10  # residual blocks per group
    M: int = 8  # multi-scale blocks in the local path
    P: int = 6  # strided conv layers in the pyramid encoder
    global_width: int = 128
    local_width: int = 64
    encoder_dim: int = 128
    fixed_res: int = 192
    output_scale: int = 1
    prelu_init: float = 0.25

    def __post_init__(self):
        for name in ("G", "B", "M", "P"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("global_width", "local_width", "encoder_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.output_scale not in (1, 2):
            raise ConfigError(f"output_scale must be 1 or 2, got {self.output_scale}")
        if self.fixed_res % (1 << self.P):
            raise ConfigError(
                f"fixed_res {self.fixed_res} must be divisible by 2^P = {1 << self.P}"
            )
        if self.encoder_dim != self.global_width:
            raise ConfigError(
                "encoder_dim must equal global_width so the broadcast add typechecks"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        missing = set(CONFIG_KEYS) - set(d)
        if missing:
            raise ConfigError(f"missing model config keys: {sorted(missing)}")
        return cls(**d)


def _conv(in_ch, out_ch, kernel, stride=1):
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)


class RIRBlock(nn.Module):
    """Residual block without channel attention: x + conv(prelu(conv(x)))."""

    def __init__(self, width: int, prelu_init: float):
        super().__init__()
        self.conv1 = _conv(width, width, 3)
        self.act = nn.PReLU(init=prelu_init)
        self.conv2 = _conv(width, width, 3)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class ResidualGroup(nn.Module):
    """B residual blocks and a conv, wrapped in a long skip."""

    def __init__(self, width: int, blocks: int, prelu_init: float):
        super().__init__()
        self.blocks = nn.Sequential(
            *[RIRBlock(width, prelu_init) for _ in range(blocks)]
        )
        self.conv = _conv(width, width, 3)

    def forward(self, x):
        return x + self.conv(self.blocks(x))


class GlobalPath(nn.Module):
    """Deep residual trunk at quarter resolution between a strided encoder
    and a transposed-conv decoder; a long skip wraps the residual groups."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.global_width
        self.enc1 = _conv(w, w, 3, stride=2)
        self.enc_act1 = nn.PReLU(init=cfg.prelu_init)
        self.enc2 = _conv(w, w, 3, stride=2)
        self.enc_act2 = nn.PReLU(init=cfg.prelu_init)
        self.groups = nn.Sequential(
            *[ResidualGroup(w, cfg.B, cfg.prelu_init) for _ in range(cfg.G)]
        )
        self.conv = _conv(w, w, 3)
        self.dec1 = nn.ConvTranspose2d(w, w, 4, stride=2, padding=1)
        self.dec_act1 = nn.PReLU(init=cfg.prelu_init)
        self.dec2 = nn.ConvTranspose2d(w, w, 4, stride=2, padding=1)
        self.dec_act2 = nn.PReLU(init=cfg.prelu_init)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise DimensionError(
                f"global path input dims must be divisible by 4, got {h}x{w}; "
                f"reflect-pad by ({-h % 4}, {-w % 4})"
            )
        e = self.enc_act2(self.enc2(self.enc_act1(self.enc1(x))))
        t = e + self.conv(self.groups(e))
        return self.dec_act2(self.dec2(self.dec_act1(self.dec1(t))))


class MSRB(nn.Module):
    """Multi-scale residual block: two feature-exchange stages of parallel
    3x3 / 5x5 convs, fused by a 1x1 bottleneck into a residual update."""

    def __init__(self, width: int, prelu_init: float):
        super().__init__()
        self.conv3_1 = _conv(width, width, 3)
        self.conv5_1 = _conv(width, width, 5)
        self.conv3_2 = _conv(2 * width, width, 3)
        self.conv5_2 = _conv(2 * width, width, 5)
        self.act3_1 = nn.PReLU(init=prelu_init)
        self.act5_1 = nn.PReLU(init=prelu_init)
        self.act3_2 = nn.PReLU(init=prelu_init)
        self.act5_2 = nn.PReLU(init=prelu_init)
        self.bottleneck = _conv(2 * width, width, 1)

    def forward(self, x):
        p1 = self.act3_1(self.conv3_1(x))
        q1 = self.act5_1(self.conv5_1(x))
        p2 = self.act3_2(self.conv3_2(torch.cat([p1, q1], dim=1)))
        q2 = self.act5_2(self.conv5_2(torch.cat([q1, p1], dim=1)))
        return x + self.bottleneck(torch.cat([p2, q2], dim=1))


class LocalPath(nn.Module):
    """Entry 1x1 conv into the local width, then M MSRBs at full resolution."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.entry = _conv(cfg.global_width, cfg.local_width, 1)
        self.blocks = nn.Sequential(
            *[MSRB(cfg.local_width, cfg.prelu_init) for _ in range(cfg.M)]
        )

    def forward(self, x):
        return self.blocks(self.entry(x))


class PyramidEncoder(nn.Module):
    """Bilinear resize to a fixed resolution, P stride-2 convs, global mean
    pool to a single vector."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fixed_res = cfg.fixed_res
        d = cfg.encoder_dim
        layers = []
        in_ch = 4
        for _ in range(cfg.P):
            layers.append(_conv(in_ch, d, 3, stride=2))
            layers.append(nn.PReLU(init=cfg.prelu_init))
            in_ch = d
        self.convs = nn.Sequential(*layers)

    def forward(self, x):
        if x.shape[-1] == 0 or x.shape[-2] == 0:
            raise DimensionError(f"degenerate encoder input shape {tuple(x.shape)}")
        fixed = F.interpolate(
            x, size=(self.fixed_res, self.fixed_res), mode="bilinear",
            align_corners=False,
        )
        return self.convs(fixed).mean(dim=(-2, -1))


class HERN(nn.Module):
    """Full network: head conv, parallel global/local paths, conv fusion,
    broadcast-added encoder vector, reconstruction tail."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        gw, lw = config.global_width, config.local_width
        self.head = _conv(4, gw, 3)
        self.global_path = GlobalPath(config)
        self.local_path = LocalPath(config)
        self.encoder = PyramidEncoder(config)
        self.fuse = _conv(gw + lw, gw, 3)
        if config.output_scale == 2:
            self.up = nn.ConvTranspose2d(gw, gw, 4, stride=2, padding=1)
            self.up_act = nn.PReLU(init=config.prelu_init)
        self.tail = _conv(gw, 3, 3)

    def forward(self, x):
        # x: (N, 4, H, W) with H, W divisible by 4
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise DimensionError(
                f"input dims must be divisible by 4, got {h}x{w}; "
                "use infer_padded to reflect-pad arbitrary sizes"
            )
        i = self.head(x)
        g = self.global_path(i)
        l = self.local_path(i)
        f = self.fuse(torch.cat([g, l], dim=1))
        v = self.encoder(x)
        f = f + v[:, :, None, None]
        if self.config.output_scale == 2:
            f = self.up_act(self.up(f))
        return self.tail(f)


def init_params(config: ModelConfig, seed: int) -> HERN:
    """Build a model with He-style fan-in init, zero biases and constant
    PReLU slopes; deterministic per (config, seed)."""
    model = HERN(config)
    gen = torch.Generator().manual_seed(seed)
    a = config.prelu_init
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
                in_ch = module.in_channels
                k = module.kernel_size[0] * module.kernel_size[1]
                std = math.sqrt(2.0 / ((1.0 + a * a) * in_ch * k))
                module.weight.copy_(
                    torch.randn(module.weight.shape, generator=gen) * std
                )
                module.bias.zero_()
            elif isinstance(module, nn.PReLU):
                module.weight.fill_(a)
    return model


def _to_tensor(data: np.ndarray, like: torch.Tensor) -> torch.Tensor:
    # HWC numpy -> 1CHW torch, matching the model's parameter dtype
    return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1))).to(
        like.dtype
    )[None]


def _to_numpy(out: torch.Tensor) -> np.ndarray:
    return out[0].detach().cpu().numpy().transpose(1, 2, 0)


def hern_forward(model: HERN, raw: RawPatch) -> np.ndarray:
    """Run the network on one packed RAW patch; returns an unclamped
    (sH, sW, 3) float array. Clamp to [0, 1] only at I/O boundaries."""
    param = next(model.parameters())
    with torch.no_grad():
        return _to_numpy(model(_to_tensor(raw.data, param)))


def infer_padded(model: HERN, raw: RawPatch) -> np.ndarray:
    """Arbitrary-resolution inference: reflect-pad to the next multiple of 4,
    run the network, crop the output back to scale x the original dims."""
    h, w = raw.height, raw.width
    ph, pw = -h % 4, -w % 4
    if ph == 0 and pw == 0:
        return hern_forward(model, raw)
    padded = np.pad(raw.data, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    out = hern_forward(model, RawPatch(padded))
    s = model.config.output_scale
    return out[: s * h, : s * w]


def parameter_count(config: ModelConfig) -> int:
    """Total learnable parameter count for a config."""
    return sum(p.numel() for p in HERN(config).parameters())
