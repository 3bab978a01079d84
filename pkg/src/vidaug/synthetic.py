"""
Synthetic scene-biased action clips.

Every clip shows one white square (the actor) that leaves the frame centre
along its class direction and comes back: class k heads toward angle
2*pi*k/K, scaled so the larger of |dx|, |dy| is 1, and its excursion peaks
at the middle frame. The path is the same played backwards, so temporal ops
never change the class; a horizontal mirror does. The square is composited
over one of K background textures. On the training splits the texture
matches the clip's class with probability `scene_bias` and is otherwise one
of the other K-1 textures, uniformly; the decorrelated test split uses
`test_bias` (1/K by default, i.e. background independent of class).

Box tracks of the square are emitted as the cached "detector" output, with
optional missed frames and edge jitter.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping, NamedTuple

import numpy as np

from .clip_core import (
    Box,
    BoxTrack,
    ClipDataset,
    ClipSample,
    RandomSource,
    SeededRng,
    VideoClip,
    rasterize_masks,
)
from .errors import ConfigurationError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_NUM_CLASSES: int = 8
DEFAULT_CLIP_SHAPE: tuple[int, int, int, int] = (8, 32, 32, 3)
DEFAULT_SCENE_BIAS: float = 0.9
DEFAULT_ACTOR_SIZE: int = 16
DEFAULT_SPEED: float = 2.0
ACTOR_VALUE: int = 255
BOX_PADDING: int = 1
STRIPE_AMPLITUDE: float = 30.0
NOISE_AMPLITUDE: float = 10.0


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_classes: int = DEFAULT_NUM_CLASSES
    labeled_per_class: int = 25
    unlabeled_per_class: int = 225
    test_per_class: int = 25
    t: int = DEFAULT_CLIP_SHAPE[0]
    h: int = DEFAULT_CLIP_SHAPE[1]
    w: int = DEFAULT_CLIP_SHAPE[2]
    c: int = DEFAULT_CLIP_SHAPE[3]
    scene_bias: float = DEFAULT_SCENE_BIAS
    test_bias: float | None = None
    actor_size: int = DEFAULT_ACTOR_SIZE
    speed: float = DEFAULT_SPEED
    detector_miss_prob: float = 0.0
    box_jitter: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("labeled_per_class", "unlabeled_per_class", "test_per_class"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.c not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.c}")
        if min(self.t, self.h, self.w) < 1:
            raise ValidationError(f"clip dims must be positive, got {self.clip_shape}")
        for name in ("scene_bias", "detector_miss_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} {getattr(self, name)} outside [0, 1]")
        if self.test_bias is not None and not 0.0 <= self.test_bias <= 1.0:
            raise ConfigurationError(f"test_bias {self.test_bias} outside [0, 1]")
        if self.actor_size < 1 or self.speed < 0 or self.box_jitter < 0:
            raise ConfigurationError("actor_size must be >= 1; speed and box_jitter must be >= 0")
        reach = int(math.ceil(self.peak_excursion))
        needed = self.actor_size + 2 * reach + 2
        if needed > min(self.h, self.w):
            raise ValidationError(
                f"a {self.actor_size}px actor reaching {reach}px from the centre needs frames "
                f"of at least {needed}x{needed}, got {self.h}x{self.w}"
            )

    @property
    def clip_shape(self) -> tuple[int, int, int, int]:
        return (self.t, self.h, self.w, self.c)

    @property
    def peak_excursion(self) -> float:
        """Largest per-axis distance of the actor from its starting point."""
        return self.speed * ((self.t - 1) // 2)

    @property
    def decorrelated_bias(self) -> float:
        return 1.0 / self.num_classes if self.test_bias is None else self.test_bias

    def to_mapping(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "SyntheticDatasetSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError(f"unknown dataset setting(s) {', '.join(unknown)}")
        return cls(**dict(mapping))


class SyntheticSplits(NamedTuple):
    labeled: ClipDataset
    unlabeled: ClipDataset
    test_biased: ClipDataset
    test_decorrelated: ClipDataset


def class_direction(label: int, num_classes: int) -> tuple[float, float]:
    """(dx, dy) of the class's excursion, with max(|dx|, |dy|) == 1."""
    angle = 2.0 * math.pi * label / num_classes
    dx, dy = math.cos(angle), math.sin(angle)
    scale = max(abs(dx), abs(dy))
    return dx / scale, dy / scale


def excursion(frame: int, spec: SyntheticDatasetSpec) -> float:
    """Distance travelled from the start at `frame`: rises, peaks mid-clip, returns."""
    middle = (spec.t - 1) / 2.0
    return spec.speed * (middle - abs(frame - middle))


def assign_backgrounds(labels, num_classes: int, bias: float, rng: RandomSource) -> np.ndarray:
    """
    Texture index per label: the class's own texture with probability `bias`,
    otherwise one of the other K-1 textures uniformly.
    """
    textures = np.empty(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        if rng.uniform() < bias:
            textures[i] = label
        else:
            other = rng.integer(num_classes - 1)
            textures[i] = other if other < label else other + 1
    return textures


def texture(index: int, spec: SyntheticDatasetSpec) -> np.ndarray:
    """H x W x C background for texture `index`: a base colour with stripes."""
    k = spec.num_classes
    phase = 2.0 * math.pi * index / k
    base = np.array([128.0 + 70.0 * math.cos(phase + shift) for shift in (0.0, 2.094, 4.189)])
    ys, xs = np.mgrid[0 : spec.h, 0 : spec.w].astype(np.float64)
    period = 4.0 + (index % 3) * 2.0
    orientation = math.pi * index / k
    stripes = STRIPE_AMPLITUDE * np.sign(
        np.sin(2.0 * math.pi * (xs * math.cos(orientation) + ys * math.sin(orientation)) / period)
    )
    image = base[np.newaxis, np.newaxis, :] + stripes[..., np.newaxis]
    if spec.c == 1:
        image = image.mean(axis=2, keepdims=True)
    return image


def _actor_origins(label: int, spec: SyntheticDatasetSpec, rng: RandomSource) -> list[tuple[int, int]]:
    dx, dy = class_direction(label, spec.num_classes)
    start_x = (spec.w - spec.actor_size) / 2.0 + (rng.integer(3) - 1)
    start_y = (spec.h - spec.actor_size) / 2.0 + (rng.integer(3) - 1)
    origins = []
    for f in range(spec.t):
        step = excursion(f, spec)
        x = int(np.clip(round(start_x + dx * step), 0, spec.w - spec.actor_size))
        y = int(np.clip(round(start_y + dy * step), 0, spec.h - spec.actor_size))
        origins.append((x, y))
    return origins


def _detector_boxes(
    clip_id: str, origins: list[tuple[int, int]], spec: SyntheticDatasetSpec, rng: RandomSource
) -> BoxTrack:
    boxes = []
    for frame, (x, y) in enumerate(origins):
        if spec.detector_miss_prob > 0.0 and rng.uniform() < spec.detector_miss_prob:
            continue
        edges = [x - BOX_PADDING, y - BOX_PADDING, x + spec.actor_size + BOX_PADDING, y + spec.actor_size + BOX_PADDING]
        if spec.box_jitter:
            edges = [e + rng.integer(2 * spec.box_jitter + 1) - spec.box_jitter for e in edges]
        x0, y0 = max(0, edges[0]), max(0, edges[1])
        x1, y1 = min(spec.w, edges[2]), min(spec.h, edges[3])
        if x0 < x1 and y0 < y1:
            boxes.append(Box(frame, x0, y0, x1, y1, 1.0))
    return BoxTrack(clip_id, tuple(boxes))


def render_clip(
    clip_id: str, label: int, texture_index: int, spec: SyntheticDatasetSpec, rng: RandomSource
) -> tuple[VideoClip, BoxTrack]:
    """Composite the class's moving actor over a noisy static background."""
    background = texture(texture_index, spec)
    noise = (rng.uniforms(spec.h * spec.w * spec.c).reshape(spec.h, spec.w, spec.c) * 2.0 - 1.0)
    background = np.clip(np.rint(background + NOISE_AMPLITUDE * noise), 0, 255).astype(np.uint8)
    frames = np.repeat(background[np.newaxis], spec.t, axis=0)
    origins = _actor_origins(label, spec, rng)
    for f, (x, y) in enumerate(origins):
        frames[f, y : y + spec.actor_size, x : x + spec.actor_size, :] = ACTOR_VALUE
    clip = VideoClip(frames, clip_id=clip_id)
    return clip, _detector_boxes(clip_id, origins, spec, rng)


def generate_split(
    name: str, per_class: int, bias: float, spec: SyntheticDatasetSpec, rng: RandomSource
) -> ClipDataset:
    """Class-balanced split, labels cycling 0..K-1."""
    labels = [i % spec.num_classes for i in range(per_class * spec.num_classes)]
    textures = assign_backgrounds(labels, spec.num_classes, bias, rng)
    samples = []
    for i, (label, texture_index) in enumerate(zip(labels, textures)):
        clip, track = render_clip(f"{name}_{i:05d}", label, int(texture_index), spec, rng)
        mask = rasterize_masks(track, spec.t, spec.h, spec.w)
        samples.append(ClipSample(clip, label, track, mask))
    return ClipDataset(tuple(samples), spec.num_classes)


def generate_synthetic(spec: SyntheticDatasetSpec) -> SyntheticSplits:
    """Labeled, unlabeled, biased-test and decorrelated-test splits."""
    root = SeededRng(spec.seed)
    logger.info(
        "generating synthetic data: K=%d, clips %s, scene_bias=%.3f, seed=%d",
        spec.num_classes,
        "x".join(map(str, spec.clip_shape)),
        spec.scene_bias,
        spec.seed,
    )
    return SyntheticSplits(
        labeled=generate_split("labeled", spec.labeled_per_class, spec.scene_bias, spec, root.split(1)),
        unlabeled=generate_split("unlabeled", spec.unlabeled_per_class, spec.scene_bias, spec, root.split(2)),
        test_biased=generate_split("test_biased", spec.test_per_class, spec.scene_bias, spec, root.split(3)),
        test_decorrelated=generate_split(
            "test_decorrelated", spec.test_per_class, spec.decorrelated_bias, spec, root.split(4)
        ),
    )
