"""
Cross-clip mixing: ActorCutMix and its CutMix / Background-CutMix comparators.

ActorCutMix keeps each clip's actor pixels and takes the background from the
partner clip:

    x~_A = m_A * x_A + (1 - m_A) * (1 - m_B) * x_B

Pixels outside A's actor but inside B's actor become 0. The mixed label is
smoothed by A's foreground ratio r:

    lambda = 1 - |1 - r| ** alpha,   y~_A = lambda * y_A + (1 - lambda) * y_B

Batch forms pair element i with element n-1-i (the batch reversed).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clip_core import HumanMask, RandomSource, SoftLabel, VideoClip, foreground_ratio
from .errors import ConfigurationError, ValidationError
from .workers import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_ALPHA: float = 4.0


@dataclass(frozen=True)
class MixConfig:
    """Label-smoothing exponent and whether mixed labels are smoothed at all."""

    alpha: float = DEFAULT_ALPHA
    smoothing: bool = True

    def __post_init__(self) -> None:
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"label smoothing exponent must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class MixResult:
    """One mixed clip, its label and lambda, and where its partner came from."""

    clip: VideoClip
    label: SoftLabel
    lam: float
    partner_id: str
    partner_index: int = 0


def _check_pair(clip_a: VideoClip, clip_b: VideoClip, where: str = "") -> None:
    """Raise ValidationError unless both clips have the same T x H x W x C."""
    if clip_a.shape != clip_b.shape:
        raise ValidationError(
            f"cannot mix clips {clip_a.clip_id!r} {clip_a.shape} and "
            f"{clip_b.clip_id!r} {clip_b.shape}{where}"
        )


def _check_masks(clip_a: VideoClip, mask_a: HumanMask, clip_b: VideoClip, mask_b: HumanMask) -> None:
    mask_a.check_matches(clip_a)
    mask_b.check_matches(clip_b)


def _swap_background(x_a: np.ndarray, m_a: np.ndarray, x_b: np.ndarray, m_b: np.ndarray) -> np.ndarray:
    """A's actor pixels over B's background; zeros where B's actor was."""
    actor_a = m_a[..., np.newaxis].astype(bool)
    actor_b = m_b[..., np.newaxis].astype(bool)
    return np.where(actor_a, x_a, np.where(actor_b, np.uint8(0), x_b))


def actor_cutmix_pair(
    clip_a: VideoClip,
    mask_a: HumanMask,
    clip_b: VideoClip,
    mask_b: HumanMask,
) -> tuple[VideoClip, VideoClip]:
    """Swap the backgrounds of two clips, keeping each clip's actor."""
    _check_pair(clip_a, clip_b)
    _check_masks(clip_a, mask_a, clip_b, mask_b)
    mixed_a = _swap_background(clip_a.frames, mask_a.mask, clip_b.frames, mask_b.mask)
    mixed_b = _swap_background(clip_b.frames, mask_b.mask, clip_a.frames, mask_a.mask)
    return clip_a.with_frames(mixed_a), clip_b.with_frames(mixed_b)


def smoothing_weight(ratio: float, alpha: float = DEFAULT_ALPHA) -> float:
    """lambda = 1 - |1 - r| ** alpha."""
    return 1.0 - abs(1.0 - ratio) ** alpha


def smooth_label(
    y_a: SoftLabel,
    y_b: SoftLabel,
    mask_a: HumanMask,
    cfg: MixConfig = MixConfig(),
) -> tuple[SoftLabel, float]:
    """
    Mix A's label toward B's by A's foreground ratio.

    Returns:
        (label, lambda); with smoothing off this is (y_a, 1.0)

    Raises:
        ValidationError: If the labels cover different class counts
    """
    if y_a.num_classes != y_b.num_classes:
        raise ValidationError(f"labels over {y_a.num_classes} and {y_b.num_classes} classes")
    if not cfg.smoothing:
        return y_a, 1.0
    lam = smoothing_weight(foreground_ratio(mask_a), cfg.alpha)
    return y_a.mix(y_b, lam), lam


def _partners(n: int) -> list[int]:
    """Partner of batch element i: the batch reversed."""
    return [n - 1 - i for i in range(n)]


def _check_batch(*lists: Sequence) -> int:
    """Common length of the batch lists, which must be equal and non-zero."""
    lengths = {len(items) for items in lists}
    if len(lengths) != 1:
        raise ValidationError(f"batch lists have different lengths {sorted(lengths)}")
    n = lengths.pop()
    if n < 1:
        raise ValidationError("cannot mix an empty batch")
    return n


def actor_cutmix_batch(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask],
    labels: Sequence[SoftLabel],
    cfg: MixConfig = MixConfig(),
) -> list[MixResult]:
    """
    ActorCutMix over a batch: element i keeps its actor on the background of
    element n-1-i.

    Args:
        clips: Batch clips, all of one shape
        masks: Actor mask of every clip
        labels: Label of every clip; element i's label is smoothed toward its partner's
        cfg: Smoothing exponent and switch

    Raises:
        ValidationError: If the lists differ in length, are empty, or shapes disagree
    """
    n = _check_batch(clips, masks, labels)
    partners = _partners(n)

    def mix_one(i: int) -> MixResult:
        j = partners[i]
        _check_pair(clips[i], clips[j], f" (batch indices {i} and {j})")
        _check_masks(clips[i], masks[i], clips[j], masks[j])
        frames = _swap_background(clips[i].frames, masks[i].mask, clips[j].frames, masks[j].mask)
        label, lam = smooth_label(labels[i], labels[j], masks[i], cfg)
        return MixResult(clips[i].with_frames(frames), label, lam, clips[j].clip_id, j)

    return ordered_map(mix_one, list(range(n)))


def background_cutmix_pair(
    clip_a: VideoClip,
    mask_a: HumanMask,
    clip_b: VideoClip,
    mask_b: HumanMask,
) -> tuple[VideoClip, VideoClip]:
    """Keep each clip's background and import the partner's actor pixels.

    x~_A = (1 - m_A) * x_A + m_A * m_B * x_B
    """
    _check_pair(clip_a, clip_b)
    _check_masks(clip_a, mask_a, clip_b, mask_b)

    def import_actor(x_a, m_a, x_b, m_b):
        own = m_a[..., np.newaxis].astype(bool)
        other = m_b[..., np.newaxis].astype(bool)
        return np.where(own, np.where(other, x_b, np.uint8(0)), x_a)

    mixed_a = import_actor(clip_a.frames, mask_a.mask, clip_b.frames, mask_b.mask)
    mixed_b = import_actor(clip_b.frames, mask_b.mask, clip_a.frames, mask_a.mask)
    return clip_a.with_frames(mixed_a), clip_b.with_frames(mixed_b)


def background_cutmix_batch(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask],
    labels: Sequence[SoftLabel],
) -> list[MixResult]:
    """Batch-reversal Background-CutMix; the kept scene decides the label (lambda = 1)."""
    n = _check_batch(clips, masks, labels)
    results = []
    for i, j in enumerate(_partners(n)):
        _check_pair(clips[i], clips[j], f" (batch indices {i} and {j})")
        mixed, _ = background_cutmix_pair(clips[i], masks[i], clips[j], masks[j])
        results.append(MixResult(mixed, labels[i], 1.0, clips[j].clip_id, j))
    return results


def sample_rectangle(h: int, w: int, rng: RandomSource) -> tuple[int, int, int, int]:
    """
    Draw a CutMix rectangle (y0, x0, y1, x1), half-open.

    The area fraction is uniform on [0, 1); side lengths scale with its
    square root and are at least one pixel. The top-left corner is uniform
    over the positions where the rectangle fits.
    """
    fraction = rng.uniform()
    side = math.sqrt(fraction)
    rect_h = min(h, max(1, int(round(h * side))))
    rect_w = min(w, max(1, int(round(w * side))))
    y0 = rng.integer(h - rect_h + 1)
    x0 = rng.integer(w - rect_w + 1)
    return y0, x0, y0 + rect_h, x0 + rect_w


def paste_rectangle(
    clip_a: VideoClip, clip_b: VideoClip, rect: tuple[int, int, int, int]
) -> tuple[VideoClip, float]:
    """Replace `rect` of every frame of A by B's pixels; returns lambda_area."""
    _check_pair(clip_a, clip_b)
    y0, x0, y1, x1 = rect
    if not (0 <= y0 < y1 <= clip_a.h and 0 <= x0 < x1 <= clip_a.w):
        raise ValidationError(f"rectangle {rect} does not fit a {clip_a.h}x{clip_a.w} frame")
    frames = clip_a.frames.copy()
    frames[:, y0:y1, x0:x1, :] = clip_b.frames[:, y0:y1, x0:x1, :]
    lam = 1.0 - ((y1 - y0) * (x1 - x0)) / (clip_a.h * clip_a.w)
    return clip_a.with_frames(frames), lam


def cutmix_pair(clip_a: VideoClip, clip_b: VideoClip, rng: RandomSource) -> tuple[VideoClip, float]:
    """Plain CutMix: one rectangle, identical on every frame."""
    _check_pair(clip_a, clip_b)
    return paste_rectangle(clip_a, clip_b, sample_rectangle(clip_a.h, clip_a.w, rng))


def cutmix_batch(
    clips: Sequence[VideoClip],
    labels: Sequence[SoftLabel],
    rng: RandomSource,
) -> list[MixResult]:
    """Batch-reversal CutMix; clip i draws its rectangle from rng.split(i)."""
    n = _check_batch(clips, labels)
    results = []
    for i, j in enumerate(_partners(n)):
        _check_pair(clips[i], clips[j], f" (batch indices {i} and {j})")
        mixed, lam = cutmix_pair(clips[i], clips[j], rng.split(i))
        results.append(MixResult(mixed, labels[i].mix(labels[j], lam), lam, clips[j].clip_id, j))
    return results
