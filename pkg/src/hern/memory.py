"""Analytic activation-memory model for CNN trunks.

Counts stored activations by propagating spatial shape through an abstract
layer list: conv outputs, transposed-conv outputs, elementwise outputs
(residual adds, attention rescales), globally pooled vectors and dense
activations. Weight memory and framework overhead are ignored, so the model
supports ratio and monotonicity statements rather than absolute gigabytes.

Layers may instead run at a patch-size-independent fixed resolution (the
full-image encoder), which contributes a constant term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError
from .model import ModelConfig

BYTES_PER_ELEMENT = 4

# kind -> how spatial resolution changes
_KINDS = {"conv", "deconv", "ewise", "pool", "dense", "resize"}


@dataclass(frozen=True)
class Layer:
    name: str
    kind: str  # conv | deconv | ewise | pool | dense | resize
    out_ch: int
    stride: int = 1
    kernel: int = 1
    in_ch: int | None = None
    fixed_side: int | None = None  # patch-size-independent resolution

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ParameterError(f"stride must be 1 or 2, got {self.stride}")
        if self.out_ch < 1:
            raise ParameterError(f"out_ch must be >= 1, got {self.out_ch}")


@dataclass(frozen=True)
class ArchSpec:
    name: str
    layers: tuple[Layer, ...]

    @property
    def stride_granularity(self) -> int:
        """Smallest divisor a valid patch side must have (max downsample)."""
        factor = 1
        worst = 1
        for layer in self.layers:
            if layer.fixed_side is not None:
                continue
            if layer.kind == "conv" and layer.stride == 2:
                factor *= 2
            elif layer.kind == "deconv" and layer.stride == 2:
                factor = max(1, factor // 2)
            worst = max(worst, factor)
        return worst


@dataclass(frozen=True)
class MemoryEstimate:
    per_layer: tuple[tuple[str, int, int], ...]  # (layer name, elements, bytes)
    total_bytes: int
    includes_gradients: bool
    bytes_per_element: int = BYTES_PER_ELEMENT


def estimate_memory(
    spec: ArchSpec, patch_side: int, batch: int = 1, include_grad: bool = False
) -> MemoryEstimate:
    """Per-layer activation element counts from shape propagation."""
    if patch_side < 1 or patch_side % spec.stride_granularity:
        raise ParameterError(
            f"patch_side must be a positive multiple of "
            f"{spec.stride_granularity}, got {patch_side}"
        )
    if batch < 1:
        raise ParameterError(f"batch must be >= 1, got {batch}")
    mult = 2 if include_grad else 1
    side = patch_side
    rows = []
    total = 0
    for layer in spec.layers:
        if layer.fixed_side is not None:
            h = w = layer.fixed_side
        else:
            if layer.kind == "conv" and layer.stride == 2:
                side //= 2
            elif layer.kind == "deconv" and layer.stride == 2:
                side *= 2
            h = w = side
        if layer.kind in ("pool", "dense"):
            h = w = 1
        elements = layer.out_ch * h * w * batch
        bytes_ = elements * BYTES_PER_ELEMENT * mult
        rows.append((layer.name, elements, bytes_))
        total += bytes_
    return MemoryEstimate(
        per_layer=tuple(rows), total_bytes=total, includes_gradients=include_grad
    )


def max_feasible_patch(spec: ArchSpec, budget_bytes: int, batch: int = 1) -> int:
    """Largest stride-valid side whose estimate fits the budget."""
    g = spec.stride_granularity
    if estimate_memory(spec, g, batch).total_bytes > budget_bytes:
        raise ParameterError(
            f"budget {budget_bytes} below the minimum side {g} estimate"
        )
    lo, hi = 1, 2  # in units of g
    while estimate_memory(spec, hi * g, batch).total_bytes <= budget_bytes:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if estimate_memory(spec, mid * g, batch).total_bytes <= budget_bytes:
            lo = mid
        else:
            hi = mid
    return lo * g


def hern_arch_spec(config: ModelConfig | None = None) -> ArchSpec:
    """Layer graph of the dual-path network plus the fixed-resolution
    full-image encoder (a patch-size-independent constant)."""
    cfg = config if config is not None else ModelConfig()
    gw, lw = cfg.global_width, cfg.local_width
    layers: list[Layer] = [Layer("head", "conv", gw, kernel=3, in_ch=4)]
    layers.append(Layer("global.enc1", "conv", gw, stride=2, kernel=3))
    layers.append(Layer("global.enc2", "conv", gw, stride=2, kernel=3))
    for g in range(cfg.G):
        for b in range(cfg.B):
            p = f"global.group{g}.block{b}"
            layers.append(Layer(f"{p}.conv1", "conv", gw, kernel=3))
            layers.append(Layer(f"{p}.conv2", "conv", gw, kernel=3))
            layers.append(Layer(f"{p}.add", "ewise", gw))
        layers.append(Layer(f"global.group{g}.conv", "conv", gw, kernel=3))
        layers.append(Layer(f"global.group{g}.add", "ewise", gw))
    layers.append(Layer("global.conv", "conv", gw, kernel=3))
    layers.append(Layer("global.skip_add", "ewise", gw))
    layers.append(Layer("global.dec1", "deconv", gw, stride=2, kernel=4))
    layers.append(Layer("global.dec2", "deconv", gw, stride=2, kernel=4))
    layers.append(Layer("local.entry", "conv", lw, kernel=1, in_ch=gw))
    for m in range(cfg.M):
        p = f"local.msrb{m}"
        layers.append(Layer(f"{p}.conv3_1", "conv", lw, kernel=3))
        layers.append(Layer(f"{p}.conv5_1", "conv", lw, kernel=5))
        layers.append(Layer(f"{p}.conv3_2", "conv", lw, kernel=3, in_ch=2 * lw))
        layers.append(Layer(f"{p}.conv5_2", "conv", lw, kernel=5, in_ch=2 * lw))
        layers.append(Layer(f"{p}.bottleneck", "conv", lw, kernel=1, in_ch=2 * lw))
        layers.append(Layer(f"{p}.add", "ewise", lw))
    layers.append(Layer("fuse", "conv", gw, kernel=3, in_ch=gw + lw))
    # fixed-resolution full-image encoder
    layers.append(Layer("encoder.resize", "resize", 4, fixed_side=cfg.fixed_res))
    side = cfg.fixed_res
    for p in range(cfg.P):
        side //= 2
        layers.append(
            Layer(f"encoder.conv{p}", "conv", cfg.encoder_dim, fixed_side=side)
        )
    layers.append(Layer("encoder.pool", "pool", cfg.encoder_dim))
    layers.append(Layer("encoder.add", "ewise", gw))
    if cfg.output_scale == 2:
        layers.append(Layer("up", "deconv", gw, stride=2, kernel=4))
    layers.append(Layer("tail", "conv", 3, kernel=3, in_ch=gw))
    return ArchSpec("hern", tuple(layers))


def rcan_like_arch_spec(
    groups: int = 10, blocks: int = 20, width: int = 64, reduction: int = 16
) -> ArchSpec:
    """Full-resolution residual trunk with channel attention, used as the
    memory baseline. Attention contributes pooled and dense vectors plus a
    full-resolution rescale output per block."""
    layers: list[Layer] = [Layer("head", "conv", width, kernel=3, in_ch=3)]
    for g in range(groups):
        for b in range(blocks):
            p = f"group{g}.block{b}"
            layers.append(Layer(f"{p}.conv1", "conv", width, kernel=3))
            layers.append(Layer(f"{p}.conv2", "conv", width, kernel=3))
            layers.append(Layer(f"{p}.att_pool", "pool", width))
            layers.append(Layer(f"{p}.att_down", "dense", max(1, width // reduction)))
            layers.append(Layer(f"{p}.att_up", "dense", width))
            layers.append(Layer(f"{p}.att_scale", "ewise", width))
            layers.append(Layer(f"{p}.add", "ewise", width))
        layers.append(Layer(f"group{g}.conv", "conv", width, kernel=3))
        layers.append(Layer(f"group{g}.add", "ewise", width))
    layers.append(Layer("conv", "conv", width, kernel=3))
    layers.append(Layer("skip_add", "ewise", width))
    layers.append(Layer("tail", "conv", 3, kernel=3, in_ch=width))
    return ArchSpec("rcan_like", tuple(layers))
