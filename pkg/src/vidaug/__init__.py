"""
vidaug - strong augmentation for video clips

This package provides temporally coherent photometric and geometric
transforms, temporal transforms and ActorCutMix scene swapping for 8-bit
video clips, composed into augmentation policies, together with a
desk-scale semi-supervised training harness for checking them.

Features:
- Bit-exact `.vclip` container and box-to-mask rasterization
- RandAugment-style op pool applied with the same parameters on every frame
- T-Half, T-Drop and T-Reverse temporal ops
- ActorCutMix with foreground-ratio label smoothing, plus CutMix comparators
- FixMatch-style trainer, synthetic scene-biased data and ablation recipes
"""

from .actor_cutmix import (
    MixConfig,
    MixResult,
    actor_cutmix_batch,
    actor_cutmix_pair,
    background_cutmix_pair,
    cutmix_pair,
    smooth_label,
)
from .aug_policy import (
    AugMode,
    AugPolicy,
    AugmentedSample,
    WeakAugConfig,
    apply_policy,
    load_policy,
    strong_augment_batch,
    weak_augment,
)
from .clip_core import (
    Box,
    BoxTrack,
    HumanMask,
    SeededRng,
    SoftLabel,
    VideoClip,
    foreground_ratio,
    load_clip,
    rasterize_masks,
    save_clip,
)
from .errors import (
    ClipFormatError,
    ClipTruncatedError,
    ConfigurationError,
    NumericError,
    TrainingDivergedError,
    ValidationError,
    VidaugError,
)
from .photo_geo_aug import PhotoGeoKind, PhotoGeoOp, ResolvedOp, resolve
from .temporal_aug import TemporalKind, TemporalOp

try:
    import importlib.metadata

    __version__: str = importlib.metadata.version("vidaug")
except (importlib.metadata.PackageNotFoundError, ImportError):
    # Fallback for development installs
    __version__: str = "0.3.0"
__all__: list[str] = [
    "VideoClip",
    "SoftLabel",
    "Box",
    "BoxTrack",
    "HumanMask",
    "SeededRng",
    "load_clip",
    "save_clip",
    "rasterize_masks",
    "foreground_ratio",
    "PhotoGeoKind",
    "PhotoGeoOp",
    "ResolvedOp",
    "resolve",
    "TemporalKind",
    "TemporalOp",
    "MixConfig",
    "MixResult",
    "actor_cutmix_pair",
    "actor_cutmix_batch",
    "background_cutmix_pair",
    "cutmix_pair",
    "smooth_label",
    "AugMode",
    "AugPolicy",
    "AugmentedSample",
    "WeakAugConfig",
    "apply_policy",
    "load_policy",
    "strong_augment_batch",
    "weak_augment",
    "VidaugError",
    "ValidationError",
    "ConfigurationError",
    "ClipFormatError",
    "ClipTruncatedError",
    "NumericError",
    "TrainingDivergedError",
]
