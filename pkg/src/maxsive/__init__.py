"""MaXsive: high-capacity training-free latent-noise watermarking with a
Fourier-domain X-template for rotation/scale/translation recovery."""

from .capacity import capacity, entropy
from .channel import ChannelConfig, transmit
from .codec import (
    KeySpec,
    RegistryIndex,
    ReplicationConfig,
    assemble_initial_noise,
    calibrate_threshold,
    derive_keys,
    extract_watermark,
    identify,
    keys_for,
    sample_watermark,
    score,
    verify,
)
from .ddim import (
    DDIMSchedule,
    inverse,
    linear_denoiser,
    make_schedule,
    predict_z0,
    reverse,
    seeded_noise_denoiser,
    zero_denoiser,
)
from .estimators import WatermarkDetector, WatermarkEmbedder
from .grids import (
    center_shift,
    crop_center,
    dft2,
    idft2,
    normalize_unit,
    pad_center,
    pearson,
    resize,
    rotate,
    uncenter_shift,
)
from .harness import (
    DecodeOptions,
    ExperimentConfig,
    decode_score,
    identify_decode,
    run_identification,
    run_verification,
)
from .template import (
    AngleEstimate,
    TemplateConfig,
    TemplateMask,
    build_mask,
    correct,
    detect_angle,
    detect_scale,
    gamma,
    inject,
    remove_template,
)

__version__ = "0.1.0"

__all__ = [
    "AngleEstimate",
    "ChannelConfig",
    "DDIMSchedule",
    "DecodeOptions",
    "ExperimentConfig",
    "KeySpec",
    "RegistryIndex",
    "ReplicationConfig",
    "TemplateConfig",
    "TemplateMask",
    "WatermarkDetector",
    "WatermarkEmbedder",
    "assemble_initial_noise",
    "build_mask",
    "calibrate_threshold",
    "capacity",
    "center_shift",
    "correct",
    "crop_center",
    "decode_score",
    "derive_keys",
    "detect_angle",
    "detect_scale",
    "dft2",
    "entropy",
    "extract_watermark",
    "gamma",
    "identify",
    "identify_decode",
    "idft2",
    "inject",
    "inverse",
    "keys_for",
    "linear_denoiser",
    "make_schedule",
    "normalize_unit",
    "pad_center",
    "pearson",
    "predict_z0",
    "remove_template",
    "resize",
    "reverse",
    "rotate",
    "run_identification",
    "run_verification",
    "sample_watermark",
    "score",
    "seeded_noise_denoiser",
    "transmit",
    "uncenter_shift",
    "verify",
    "zero_denoiser",
]
