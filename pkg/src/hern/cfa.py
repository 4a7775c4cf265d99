"""Bayer CFA modelling: packing, synthetic RAW generation, cropping and flips.

All tensors are numpy float32 arrays with values in [0, 1]. The packed RAW
representation splits each 2x2 RGGB cell of the mosaic into four channels
ordered [R, G1, B, G2], halving both spatial dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

# channel order of a packed RAW tensor
RAW_CHANNELS = ("R", "G1", "B", "G2")


def _check_range(data: np.ndarray, name: str) -> None:
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")


@dataclass(frozen=True)
class BayerMosaic:
    """Single-channel sensor image with a repeating 2x2 RGGB pattern."""

    data: np.ndarray  # (2H, 2W)
    pattern: str = "RGGB"

    def __post_init__(self):
        if self.data.ndim != 2:
            raise DimensionError(f"mosaic must be 2D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2:
            raise DimensionError(f"mosaic dimensions must be even, got {h}x{w}")
        if self.pattern != "RGGB":
            raise ParameterError(f"unsupported CFA pattern {self.pattern!r}")
        _check_range(self.data, "mosaic")


@dataclass(frozen=True)
class RawPatch:
    """Packed 4-channel half-resolution RAW tensor, channels [R, G1, B, G2]."""

    data: np.ndarray  # (H, W, 4)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise DimensionError(f"raw patch must be HxWx4, got shape {self.data.shape}")
        _check_range(self.data, "raw patch")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RgbImage:
    """3-channel RGB image in [0, 1]."""

    data: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise DimensionError(f"rgb image must be HxWx3, got shape {self.data.shape}")
        _check_range(self.data, "rgb image")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PairedSample:
    """Aligned (raw, rgb) training pair; rgb dims are scale x raw dims."""

    raw: RawPatch
    rgb: RgbImage
    scale: int = 1

    def __post_init__(self):
        if self.scale not in (1, 2):
            raise ParameterError(f"scale must be 1 or 2, got {self.scale}")
        if self.raw.height % 4 or self.raw.width % 4:
            raise DimensionError(
                f"raw dims must be divisible by 4, got {self.raw.height}x{self.raw.width}"
            )
        if (self.rgb.height, self.rgb.width) != (
            self.scale * self.raw.height,
            self.scale * self.raw.width,
        ):
            raise DimensionError(
                f"rgb dims {self.rgb.height}x{self.rgb.width} != "
                f"{self.scale} x raw dims {self.raw.height}x{self.raw.width}"
            )


def pack_bayer(mosaic: BayerMosaic) -> RawPatch:
    """Split each 2x2 RGGB cell into the four channels [R, G1, B, G2]."""
    m = mosaic.data
    packed = np.stack(
        [m[0::2, 0::2], m[0::2, 1::2], m[1::2, 1::2], m[1::2, 0::2]], axis=-1
    )
    return RawPatch(np.ascontiguousarray(packed))


def unpack_bayer(raw: RawPatch) -> BayerMosaic:
    """Exact inverse of :func:`pack_bayer`."""
    h, w, _ = raw.data.shape
    mosaic = np.empty((2 * h, 2 * w), dtype=raw.data.dtype)
    mosaic[0::2, 0::2] = raw.data[..., 0]
    mosaic[0::2, 1::2] = raw.data[..., 1]
    mosaic[1::2, 1::2] = raw.data[..., 2]
    mosaic[1::2, 0::2] = raw.data[..., 3]
    return BayerMosaic(mosaic)


def _half_size_bilinear(rgb: np.ndarray) -> np.ndarray:
    # exact 2x2 block mean == bilinear downsample by 2 without corner alignment
    h, w, c = rgb.shape
    return rgb.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def synthesize_raw(
    rgb: RgbImage,
    gains: tuple[float, float, float],
    noise_sigma: float,
    seed: int,
    scale: int = 1,
) -> PairedSample:
    """Generate a degraded RAW patch paired with its clean RGB target.

    Each RGB channel is divided by its gain; for scale 2 the degraded image is
    bilinearly half-sized first. The RGGB mosaic is then sampled per packed
    pixel (R, G, B, G from the same location), Gaussian noise is added, and the
    result is clipped to [0, 1]. Deterministic given the seed.
    """
    if any(g <= 0 for g in gains):
        raise ParameterError(f"gains must be positive, got {gains}")
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    divisor = 4 * scale
    if rgb.height % divisor or rgb.width % divisor:
        raise DimensionError(
            f"rgb dims must be divisible by {divisor} for scale {scale}, "
            f"got {rgb.height}x{rgb.width}"
        )
    degraded = rgb.data.astype(np.float64) / np.asarray(gains, dtype=np.float64)
    if scale == 2:
        degraded = _half_size_bilinear(degraded)
    # per packed pixel: R, G, B, G all sampled at the same site
    raw = degraded[..., [0, 1, 2, 1]]
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        raw = raw + rng.normal(0.0, noise_sigma, size=raw.shape)
    raw = np.clip(raw, 0.0, 1.0).astype(np.float32)
    return PairedSample(RawPatch(raw), rgb, scale)


def random_crop_pair(sample: PairedSample, size: int, seed: int) -> PairedSample:
    """Aligned random square crop of a pair; deterministic per seed."""
    if size % 4:
        raise ParameterError(f"crop size must be divisible by 4, got {size}")
    h, w = sample.raw.height, sample.raw.width
    if size > h or size > w:
        raise ParameterError(f"crop size {size} exceeds raw dims {h}x{w}")
    rng = np.random.default_rng(seed)
    oy = int(rng.integers(0, h - size + 1))
    ox = int(rng.integers(0, w - size + 1))
    s = sample.scale
    raw = sample.raw.data[oy : oy + size, ox : ox + size]
    rgb = sample.rgb.data[s * oy : s * (oy + size), s * ox : s * (ox + size)]
    return PairedSample(RawPatch(raw.copy()), RgbImage(rgb.copy()), s)


def flip_pair(sample: PairedSample, horizontal: bool, vertical: bool) -> PairedSample:
    """Flip raw and rgb along the same spatial axes; no channel permutation."""
    axes = []
    if vertical:
        axes.append(0)
    if horizontal:
        axes.append(1)
    if not axes:
        return sample
    raw = np.flip(sample.raw.data, axis=axes).copy()
    rgb = np.flip(sample.rgb.data, axis=axes).copy()
    return PairedSample(RawPatch(raw), RgbImage(rgb), sample.scale)
