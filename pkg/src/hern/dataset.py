"""On-disk dataset layout and the synthetic pair generator.

Layout: ``<root>/raw/<id>.png`` (single-channel 8-bit PNG holding the Bayer
mosaic), ``<root>/rgb/<id>.png`` (8-bit RGB PNG), plus ``manifest.json``
recording ids and generation parameters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .cfa import (
    BayerMosaic,
    PairedSample,
    RawPatch,
    RgbImage,
    pack_bayer,
    synthesize_raw,
    unpack_bayer,
)
from .errors import ParameterError

MANIFEST_NAME = "manifest.json"


def _to_uint8(data: np.ndarray) -> np.ndarray:
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def _from_uint8(data: np.ndarray) -> np.ndarray:
    return (data.astype(np.float32) / 255.0).astype(np.float32)


def save_raw_png(mosaic: BayerMosaic, path) -> None:
    Image.fromarray(_to_uint8(mosaic.data), mode="L").save(path)


def load_raw_png(path) -> RawPatch:
    mosaic = _from_uint8(np.asarray(Image.open(path).convert("L")))
    return pack_bayer(BayerMosaic(mosaic))


def save_rgb_png(rgb: np.ndarray, path) -> None:
    """Write an RGB float array as 8-bit PNG, clamping to [0, 1]."""
    Image.fromarray(_to_uint8(rgb), mode="RGB").save(path)


def load_rgb_png(path) -> RgbImage:
    return RgbImage(_from_uint8(np.asarray(Image.open(path).convert("RGB"))))


def save_pair(root, sample_id: str, sample: PairedSample) -> None:
    root = Path(root)
    (root / "raw").mkdir(parents=True, exist_ok=True)
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    save_raw_png(unpack_bayer(sample.raw), root / "raw" / f"{sample_id}.png")
    save_rgb_png(sample.rgb.data, root / "rgb" / f"{sample_id}.png")


def load_pair(root, sample_id: str, scale: int = 1) -> PairedSample:
    root = Path(root)
    raw = load_raw_png(root / "raw" / f"{sample_id}.png")
    rgb = load_rgb_png(root / "rgb" / f"{sample_id}.png")
    return PairedSample(raw, rgb, scale)


def _smooth_random_rgb(side: int, rng: np.random.Generator) -> RgbImage:
    # blocky random content: enough structure to learn, cheap to generate
    cell = 4
    low = rng.uniform(0.0, 1.0, size=(max(1, side // cell), max(1, side // cell), 3))
    img = np.kron(low, np.ones((cell, cell, 1)))[:side, :side]
    return RgbImage(img.astype(np.float32))


def generate_dataset(
    root,
    count: int,
    size: int,
    gains: tuple[float, float, float],
    sigma: float,
    seed: int,
    scale: int = 1,
) -> list[str]:
    """Write ``count`` synthetic pairs of raw side ``size`` and a manifest.

    Bit-identical output files for identical arguments.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    root = Path(root)
    ids = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        rgb = _smooth_random_rgb(scale * size, rng)
        sample = synthesize_raw(rgb, gains, sigma, int(rng.integers(0, 2**32)), scale)
        sample_id = f"{i:04d}"
        save_pair(root, sample_id, sample)
        ids.append(sample_id)
    manifest = {
        "ids": ids,
        "gains": list(gains),
        "sigma": sigma,
        "seed": seed,
        "scale": scale,
        "size": size,
    }
    with open(root / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return ids


def load_dataset(root) -> list[PairedSample]:
    root = Path(root)
    with open(root / MANIFEST_NAME) as f:
        manifest = json.load(f)
    scale = manifest.get("scale", 1)
    return [load_pair(root, sid, scale) for sid in manifest["ids"]]
