"""
Augmentation policies: weak views and the strong composition strategies.

The strong strategy draws one p ~ U[0, 1) per batch. When p > 1 - branch_prob
(p > 0.5 by default) the whole batch goes through ActorCutMix; otherwise each
clip gets two coherent photometric/geometric ops followed by one temporal op.
The other modes are the comparators used by the ablation recipes.

Policy files are YAML or JSON:

    mode: StrongAlg1
    photo_geo_pool: [Identity, Rotate, ...]
    temporal_pool: [Identity, THalf, TDrop, TReverse]
    alpha: 4.0
    smoothing: true
    branch_prob: 0.5
    weak: {flip_prob: 0.5, scale_range: [1.0, 1.25], crop_size: [32, 32]}
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
import yaml

from .actor_cutmix import (
    DEFAULT_ALPHA,
    MixConfig,
    actor_cutmix_batch,
    background_cutmix_batch,
    cutmix_batch,
)
from .clip_core import HumanMask, RandomSource, SoftLabel, VideoClip
from .errors import ConfigurationError, ValidationError
from .photo_geo_aug import (
    ALL_KINDS,
    PhotoGeoKind,
    apply_clip_coherent,
    apply_clip_per_frame,
    parse_kind,
    resolve,
    sample_two_ops,
)
from .temporal_aug import (
    ALL_TEMPORAL_KINDS,
    DEFAULT_DROP_PROB,
    TemporalKind,
    apply_temporal,
    parse_temporal_kind,
    sample_temporal_op,
)
from .workers import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_BRANCH_PROB: float = 0.5
DEFAULT_FLIP_PROB: float = 0.5
DEFAULT_SCALE_RANGE: tuple[float, float] = (1.0, 1.25)


class AugMode(str, enum.Enum):
    STRONG_ALG1 = "StrongAlg1"
    INTRA_CASCADED = "IntraCascaded"
    INTRA_SAMPLE_ONE = "IntraSampleOne"
    CROSS_ONLY = "CrossOnly"
    CASCADED_INTRA_CROSS = "CascadedIntraCross"
    WEAK_ONLY = "WeakOnly"
    PER_FRAME = "PerFrame"
    CUTMIX_ONLY = "CutMixOnly"
    BACKGROUND_CUTMIX_ONLY = "BackgroundCutMixOnly"


_MODE_BY_NAME = {m.value.lower(): m for m in AugMode}

INTRA_MODES = frozenset(
    {
        AugMode.STRONG_ALG1,
        AugMode.INTRA_CASCADED,
        AugMode.INTRA_SAMPLE_ONE,
        AugMode.CASCADED_INTRA_CROSS,
        AugMode.PER_FRAME,
    }
)
MASK_MODES = frozenset(
    {
        AugMode.STRONG_ALG1,
        AugMode.CROSS_ONLY,
        AugMode.CASCADED_INTRA_CROSS,
        AugMode.BACKGROUND_CUTMIX_ONLY,
    }
)


def parse_mode(name: str | AugMode) -> AugMode:
    if isinstance(name, AugMode):
        return name
    key = str(name).replace("-", "").replace("_", "").replace(" ", "").lower()
    try:
        return _MODE_BY_NAME[key]
    except KeyError:
        valid = ", ".join(m.value for m in AugMode)
        raise ConfigurationError(f"unknown augmentation mode {name!r}; valid: {valid}") from None


def requires_masks(mode: AugMode | str) -> bool:
    """True when the mode can take a branch that reads human masks."""
    return parse_mode(mode) in MASK_MODES


@dataclass(frozen=True)
class WeakAugConfig:
    flip_prob: float = DEFAULT_FLIP_PROB
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE
    crop_size: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError(f"flip_prob {self.flip_prob} outside [0, 1]")
        lo, hi = (float(v) for v in self.scale_range)
        if not (0.0 < lo <= hi and math.isfinite(hi)):
            raise ConfigurationError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        object.__setattr__(self, "scale_range", (lo, hi))
        if self.crop_size is not None:
            crop_h, crop_w = (int(v) for v in self.crop_size)
            if crop_h < 1 or crop_w < 1:
                raise ConfigurationError(f"crop_size must be positive, got {self.crop_size}")
            object.__setattr__(self, "crop_size", (crop_h, crop_w))


@dataclass(frozen=True)
class AugPolicy:
    mode: AugMode = AugMode.STRONG_ALG1
    photo_geo_pool: tuple[PhotoGeoKind, ...] = ALL_KINDS
    temporal_pool: tuple[TemporalKind, ...] = ALL_TEMPORAL_KINDS
    cross_cfg: MixConfig = field(default_factory=MixConfig)
    branch_prob: float = DEFAULT_BRANCH_PROB
    drop_prob: float = DEFAULT_DROP_PROB
    drop_chain: bool = True
    weak: WeakAugConfig = field(default_factory=WeakAugConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", parse_mode(self.mode))
        object.__setattr__(self, "photo_geo_pool", tuple(parse_kind(k) for k in self.photo_geo_pool))
        object.__setattr__(
            self, "temporal_pool", tuple(parse_temporal_kind(k) for k in self.temporal_pool)
        )
        if not 0.0 <= self.branch_prob <= 1.0:
            raise ConfigurationError(f"branch_prob {self.branch_prob} outside [0, 1]")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ConfigurationError(f"drop_prob {self.drop_prob} outside [0, 1]")
        if self.mode in INTRA_MODES:
            if not self.photo_geo_pool:
                raise ConfigurationError(f"mode {self.mode.value} needs a non-empty photo_geo_pool")
            if not self.temporal_pool:
                raise ConfigurationError(f"mode {self.mode.value} needs a non-empty temporal_pool")

    def with_mode(self, mode: AugMode | str) -> "AugPolicy":
        return AugPolicy(
            parse_mode(mode),
            self.photo_geo_pool,
            self.temporal_pool,
            self.cross_cfg,
            self.branch_prob,
            self.drop_prob,
            self.drop_chain,
            self.weak,
        )


class AugmentedSample(NamedTuple):
    """One augmented clip; `partner` is the mixing partner's batch index or -1."""

    clip: VideoClip
    label: SoftLabel
    lam: float = 1.0
    partner: int = -1
    branch: str = "intra"


# Weak augmentation


def _resize_nearest(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = frames.shape[1:3]
    rows = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.int64), w - 1)
    return frames[:, rows][:, :, cols]


def weak_augment(clip: VideoClip, cfg: WeakAugConfig, rng: RandomSource) -> VideoClip:
    """
    Flip, scale and crop with one draw each per clip, applied to every frame.

    Draw order: flip uniform, scale uniform, crop row offset, crop column offset.

    Raises:
        ValidationError: If the crop does not fit the scaled frame
    """
    flip = rng.uniform() < cfg.flip_prob
    lo, hi = cfg.scale_range
    scale = lo + (hi - lo) * rng.uniform()
    scaled_h = max(1, int(round(clip.h * scale)))
    scaled_w = max(1, int(round(clip.w * scale)))
    crop_h, crop_w = cfg.crop_size or (clip.h, clip.w)
    if crop_h > scaled_h or crop_w > scaled_w:
        raise ValidationError(
            f"crop {crop_h}x{crop_w} does not fit clip {clip.clip_id!r} scaled to {scaled_h}x{scaled_w}"
        )
    y0 = rng.integer(scaled_h - crop_h + 1)
    x0 = rng.integer(scaled_w - crop_w + 1)

    frames = clip.frames[:, :, ::-1] if flip else clip.frames
    if (scaled_h, scaled_w) != (clip.h, clip.w):
        frames = _resize_nearest(frames, scaled_h, scaled_w)
    return clip.with_frames(frames[:, y0 : y0 + crop_h, x0 : x0 + crop_w])


def center_crop(clip: VideoClip, crop_size: tuple[int, int] | None) -> VideoClip:
    """Deterministic central window, used when evaluation dims require it."""
    if crop_size is None or tuple(crop_size) == (clip.h, clip.w):
        return clip
    crop_h, crop_w = crop_size
    if crop_h > clip.h or crop_w > clip.w:
        raise ValidationError(f"crop {crop_h}x{crop_w} larger than clip {clip.h}x{clip.w}")
    y0 = (clip.h - crop_h) // 2
    x0 = (clip.w - crop_w) // 2
    return clip.with_frames(clip.frames[:, y0 : y0 + crop_h, x0 : x0 + crop_w])


# Intra-clip strategies


def _temporal(clip: VideoClip, policy: AugPolicy, rng: RandomSource) -> VideoClip:
    op = sample_temporal_op(rng, policy.temporal_pool, policy.drop_prob)
    return apply_temporal(clip, op, rng, chain=policy.drop_chain)


def _photo_geo_pair(clip: VideoClip, policy: AugPolicy, rng: RandomSource) -> VideoClip:
    first, second = sample_two_ops(policy.photo_geo_pool, rng)
    resolved = [resolve(first, rng), resolve(second, rng)]
    for rop in resolved:
        clip = apply_clip_coherent(clip, rop)
    return clip


def intra_cascaded(clip: VideoClip, policy: AugPolicy, rng: RandomSource) -> VideoClip:
    """Two coherent photometric/geometric ops, then one temporal op."""
    return _temporal(_photo_geo_pair(clip, policy, rng), policy, rng)


def intra_sample_one(clip: VideoClip, policy: AugPolicy, rng: RandomSource) -> VideoClip:
    """Fair coin: the photometric/geometric pair alone, or the temporal op alone."""
    if rng.uniform() < 0.5:
        return _photo_geo_pair(clip, policy, rng)
    return _temporal(clip, policy, rng)


def per_frame_cascaded(clip: VideoClip, policy: AugPolicy, rng: RandomSource) -> VideoClip:
    """Like `intra_cascaded`, but each frame draws its own magnitudes and signs."""
    for op in sample_two_ops(policy.photo_geo_pool, rng):
        clip = apply_clip_per_frame(clip, op, rng, redraw_magnitude=True)
    return _temporal(clip, policy, rng)


_INTRA = {
    AugMode.STRONG_ALG1: intra_cascaded,
    AugMode.INTRA_CASCADED: intra_cascaded,
    AugMode.CASCADED_INTRA_CROSS: intra_cascaded,
    AugMode.INTRA_SAMPLE_ONE: intra_sample_one,
    AugMode.PER_FRAME: per_frame_cascaded,
}


def _check_aligned(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    labels: Sequence[SoftLabel],
) -> None:
    if len(clips) != len(labels):
        raise ValidationError(f"{len(clips)} clips but {len(labels)} labels")
    if masks is not None and len(masks) != len(clips):
        raise ValidationError(f"{len(clips)} clips but {len(masks)} masks")


def _require_masks(
    masks: Sequence[HumanMask | None] | None, mode: AugMode
) -> list[HumanMask]:
    if masks is None or any(m is None for m in masks):
        raise ConfigurationError(f"mode {mode.value} drew a cross-clip branch but human masks are missing")
    return list(masks)  # type: ignore[arg-type]


def _intra_batch(
    clips: Sequence[VideoClip], policy: AugPolicy, rng: RandomSource
) -> list[VideoClip]:
    strategy = _INTRA[policy.mode]
    batch_rng = rng.spawn()
    return ordered_map(lambda i: strategy(clips[i], policy, batch_rng.split(i)), list(range(len(clips))))


def _cross_batch(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    labels: Sequence[SoftLabel],
    policy: AugPolicy,
) -> list[AugmentedSample]:
    mixed = actor_cutmix_batch(clips, _require_masks(masks, policy.mode), labels, policy.cross_cfg)
    return [AugmentedSample(r.clip, r.label, r.lam, r.partner_index, "cross") for r in mixed]


def strong_augment_batch(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    labels: Sequence[SoftLabel],
    policy: AugPolicy,
    rng: RandomSource,
) -> list[AugmentedSample]:
    """
    One branch draw per batch: ActorCutMix for everyone, or the intra cascade per clip.

    Clip i on the intra path uses `rng.spawn().split(i)`, so results do not
    depend on how many workers run the batch.
    """
    _check_aligned(clips, masks, labels)
    p = rng.uniform()
    if p > 1.0 - policy.branch_prob:
        logger.debug("strong augmentation: cross branch (p=%.4f)", p)
        return _cross_batch(clips, masks, labels, policy)
    logger.debug("strong augmentation: intra branch (p=%.4f)", p)
    intra_policy = policy if policy.mode in INTRA_MODES else policy.with_mode(AugMode.STRONG_ALG1)
    outputs = _intra_batch(clips, intra_policy, rng)
    return [AugmentedSample(clip, label) for clip, label in zip(outputs, labels)]


def cascaded_intra_cross(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    labels: Sequence[SoftLabel],
    policy: AugPolicy,
    rng: RandomSource,
) -> list[AugmentedSample]:
    """Intra cascade per clip, then ActorCutMix over the results (source masks reused)."""
    _check_aligned(clips, masks, labels)
    intra_policy = policy.with_mode(AugMode.CASCADED_INTRA_CROSS)
    return _cross_batch(_intra_batch(clips, intra_policy, rng), masks, labels, intra_policy)


def apply_policy(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    labels: Sequence[SoftLabel],
    policy: AugPolicy,
    rng: RandomSource,
) -> list[AugmentedSample]:
    """Run any policy mode over a batch."""
    _check_aligned(clips, masks, labels)
    if not clips:
        return []
    mode = policy.mode
    if mode == AugMode.STRONG_ALG1:
        return strong_augment_batch(clips, masks, labels, policy, rng)
    if mode == AugMode.CASCADED_INTRA_CROSS:
        return cascaded_intra_cross(clips, masks, labels, policy, rng)
    if mode == AugMode.CROSS_ONLY:
        return _cross_batch(clips, masks, labels, policy)
    if mode == AugMode.CUTMIX_ONLY:
        mixed = cutmix_batch(clips, labels, rng.spawn())
        return [AugmentedSample(r.clip, r.label, r.lam, r.partner_index, "cutmix") for r in mixed]
    if mode == AugMode.BACKGROUND_CUTMIX_ONLY:
        mixed = background_cutmix_batch(clips, _require_masks(masks, mode), labels)
        return [
            AugmentedSample(r.clip, r.label, r.lam, r.partner_index, "background") for r in mixed
        ]
    if mode == AugMode.WEAK_ONLY:
        batch_rng = rng.spawn()
        outputs = ordered_map(
            lambda i: weak_augment(clips[i], policy.weak, batch_rng.split(i)), list(range(len(clips)))
        )
        return [AugmentedSample(clip, label, branch="weak") for clip, label in zip(outputs, labels)]
    outputs = _intra_batch(clips, policy, rng)
    return [AugmentedSample(clip, label) for clip, label in zip(outputs, labels)]


def mix_targets(samples: Sequence[AugmentedSample], labels: Sequence[SoftLabel]) -> list[SoftLabel]:
    """Recompute each sample's target from a new label set using its recorded lam and partner."""
    if len(samples) != len(labels):
        raise ValidationError(f"{len(samples)} samples but {len(labels)} labels")
    targets = []
    for i, sample in enumerate(samples):
        if sample.partner < 0:
            targets.append(labels[i])
        else:
            targets.append(labels[i].mix(labels[sample.partner], sample.lam))
    return targets


# Policy files

_POLICY_KEYS = frozenset(
    {"mode", "photo_geo_pool", "temporal_pool", "alpha", "smoothing", "branch_prob",
     "drop_prob", "drop_chain", "weak"}
)
_WEAK_KEYS = frozenset({"flip_prob", "scale_range", "crop_size"})


def _check_keys(mapping: Mapping[str, Any], allowed: frozenset[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")


def weak_from_mapping(mapping: Mapping[str, Any] | None) -> WeakAugConfig:
    if not mapping:
        return WeakAugConfig()
    if not isinstance(mapping, Mapping):
        raise ConfigurationError("weak augmentation settings must be a mapping")
    _check_keys(mapping, _WEAK_KEYS, "weak")
    crop = mapping.get("crop_size")
    return WeakAugConfig(
        flip_prob=float(mapping.get("flip_prob", DEFAULT_FLIP_PROB)),
        scale_range=tuple(mapping.get("scale_range", DEFAULT_SCALE_RANGE)),  # type: ignore[arg-type]
        crop_size=tuple(crop) if crop is not None else None,  # type: ignore[arg-type]
    )


def policy_from_mapping(mapping: Mapping[str, Any]) -> AugPolicy:
    """Build a policy from a parsed policy document; missing keys take defaults."""
    if not isinstance(mapping, Mapping):
        raise ConfigurationError("policy document must be a mapping")
    _check_keys(mapping, _POLICY_KEYS, "policy")
    try:
        return AugPolicy(
            mode=parse_mode(mapping.get("mode", AugMode.STRONG_ALG1)),
            photo_geo_pool=tuple(mapping.get("photo_geo_pool", ALL_KINDS)),
            temporal_pool=tuple(mapping.get("temporal_pool", ALL_TEMPORAL_KINDS)),
            cross_cfg=MixConfig(
                alpha=float(mapping.get("alpha", DEFAULT_ALPHA)),
                smoothing=bool(mapping.get("smoothing", True)),
            ),
            branch_prob=float(mapping.get("branch_prob", DEFAULT_BRANCH_PROB)),
            drop_prob=float(mapping.get("drop_prob", DEFAULT_DROP_PROB)),
            drop_chain=bool(mapping.get("drop_chain", True)),
            weak=weak_from_mapping(mapping.get("weak")),
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid policy: {e}") from e


def policy_to_mapping(policy: AugPolicy) -> dict[str, Any]:
    weak: dict[str, Any] = {
        "flip_prob": policy.weak.flip_prob,
        "scale_range": list(policy.weak.scale_range),
    }
    if policy.weak.crop_size is not None:
        weak["crop_size"] = list(policy.weak.crop_size)
    return {
        "mode": policy.mode.value,
        "photo_geo_pool": [k.value for k in policy.photo_geo_pool],
        "temporal_pool": [k.value for k in policy.temporal_pool],
        "alpha": policy.cross_cfg.alpha,
        "smoothing": policy.cross_cfg.smoothing,
        "branch_prob": policy.branch_prob,
        "drop_prob": policy.drop_prob,
        "drop_chain": policy.drop_chain,
        "weak": weak,
    }


def load_policy(path: str | Path) -> AugPolicy:
    """Read a YAML or JSON policy file."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            document = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path}: cannot parse policy: {e}") from e
    if document is None:
        document = {}
    try:
        return policy_from_mapping(document)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}: {e}") from e
