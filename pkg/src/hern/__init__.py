"""RAW-to-RGB demosaicing and enhancement with a dual-path network,
progressive-resolution training and test-time ensembling."""

from .cfa import (
    BayerMosaic,
    PairedSample,
    RawPatch,
    RgbImage,
    flip_pair,
    pack_bayer,
    random_crop_pair,
    synthesize_raw,
    unpack_bayer,
)
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .ensemble import FlipTransform, epoch_ensemble, self_ensemble
from .memory import (
    ArchSpec,
    MemoryEstimate,
    estimate_memory,
    hern_arch_spec,
    max_feasible_patch,
    rcan_like_arch_spec,
)
from .metrics import psnr, ssim
from .model import HERN, ModelConfig, hern_forward, infer_padded, init_params
from .training import (
    AdamState,
    TrainSchedule,
    TrainStage,
    adam_step,
    l1_loss,
    progressive_train,
    train_stage,
)

__version__ = "0.1.0"
