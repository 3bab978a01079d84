"""
Clip, mask and label data model for vidaug.

Holds the value types every augmentation works on, the seeded random source
used for all draws, the bit-exact `.vclip` container, and the rasterization
of cached detector boxes into binary human masks.

Pixels are stored as 8-bit unsigned values. Kernels compute in floating
point and write back through `quantize`, which rounds half to even and
clamps to [0, 255].
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from .errors import (
    ClipFormatError,
    ClipTruncatedError,
    ConfigurationError,
    ValidationError,
)

VCLIP_MAGIC: bytes = b"VCLP"
VCLIP_VERSION: int = 1
VCLIP_HEADER = struct.Struct("<4sIIIII")

DEFAULT_SCORE_THRESHOLD: float = 0.5
LABEL_SUM_TOLERANCE: float = 1e-9

_SEED_MASK: int = (1 << 64) - 1
_SPAWN_BOUND: int = 1 << 63


class RandomSource(Protocol):
    """Source of every random draw made by an augmentation or trainer.

    Implementations are not safe to share between threads; hand each worker
    its own instance from `split`.
    """

    seed: int

    def uniform(self) -> float: ...

    def uniforms(self, n: int) -> np.ndarray: ...

    def integer(self, n: int) -> int: ...

    def sign(self) -> int: ...

    def split(self, index: int) -> "RandomSource": ...

    def spawn(self) -> "RandomSource": ...


class SeededRng:
    """PCG64 generator keyed by a 64-bit seed.

    The seed is expanded through numpy's SeedSequence, whose output and the
    PCG64 stream are fixed across platforms, so equal seeds give equal draws.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _SEED_MASK
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self) -> float:
        """One draw from U[0, 1)."""
        return float(self._generator.random())

    def uniforms(self, n: int) -> np.ndarray:
        """`n` independent draws from U[0, 1)."""
        return self._generator.random(n)

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise ConfigurationError(f"cannot draw an integer from an empty range [0, {n})")
        return int(self._generator.integers(0, n))

    def sign(self) -> int:
        return 1 if self.integer(2) == 1 else -1

    def split(self, index: int) -> "SeededRng":
        """Per-worker generator: seed XOR index."""
        return SeededRng(self.seed ^ int(index))

    def spawn(self) -> "SeededRng":
        """Generator keyed by a fresh seed drawn from this stream."""
        return SeededRng(int(self._generator.integers(0, _SPAWN_BOUND)))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed})"


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half to even, clamp to [0, 255] and cast to uint8."""
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class VideoClip:
    """T x H x W x C pixel volume, the unit every augmentation transforms."""

    frames: np.ndarray
    clip_id: str = ""

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames)
        if frames.ndim != 4:
            raise ValidationError(
                f"clip {self.clip_id!r}: expected a T x H x W x C array, got shape {frames.shape}"
            )
        t, h, w, c = frames.shape
        if t < 1 or h < 1 or w < 1:
            raise ValidationError(f"clip {self.clip_id!r}: dims must be positive, got {frames.shape}")
        if c not in (1, 3):
            raise ValidationError(f"clip {self.clip_id!r}: channels must be 1 or 3, got {c}")
        if frames.dtype != np.uint8:
            if frames.size and (frames.min() < 0 or frames.max() > 255):
                raise ValidationError(f"clip {self.clip_id!r}: pixel values outside [0, 255]")
        pixels = np.array(frames, dtype=np.uint8, copy=True, order="C")
        pixels.setflags(write=False)
        object.__setattr__(self, "frames", pixels)

    @property
    def t(self) -> int:
        return int(self.frames.shape[0])

    @property
    def h(self) -> int:
        return int(self.frames.shape[1])

    @property
    def w(self) -> int:
        return int(self.frames.shape[2])

    @property
    def c(self) -> int:
        return int(self.frames.shape[3])

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.t, self.h, self.w, self.c)

    def with_frames(self, frames: np.ndarray) -> "VideoClip":
        """New clip with the same id and different pixels."""
        return VideoClip(frames, clip_id=self.clip_id)

    def pixels_equal(self, other: "VideoClip") -> bool:
        """Bitwise equality of dims and pixels (ids are ignored)."""
        return self.shape == other.shape and np.array_equal(self.frames, other.frames)

    def __repr__(self) -> str:
        return f"VideoClip(id={self.clip_id!r}, shape={self.shape})"


@dataclass(frozen=True, eq=False)
class SoftLabel:
    """Probability vector over K classes."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64, copy=True)
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise ValidationError(f"label needs a vector of K >= 2 entries, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValidationError("label entries must be finite and non-negative")
        if abs(float(probs.sum()) - 1.0) > LABEL_SUM_TOLERANCE:
            raise ValidationError(f"label entries sum to {probs.sum()!r}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def one_hot(cls, index: int, num_classes: int) -> "SoftLabel":
        if not 0 <= index < num_classes:
            raise ValidationError(f"class index {index} outside [0, {num_classes})")
        probs = np.zeros(num_classes, dtype=np.float64)
        probs[index] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_classes: int) -> "SoftLabel":
        return cls(np.full(num_classes, 1.0 / num_classes))

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[0])

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def mix(self, other: "SoftLabel", lam: float) -> "SoftLabel":
        """lam * self + (1 - lam) * other."""
        if other.num_classes != self.num_classes:
            raise ValidationError(
                f"cannot mix labels over {self.num_classes} and {other.num_classes} classes"
            )
        return SoftLabel(lam * self.probs + (1.0 - lam) * other.probs)


class Box(NamedTuple):
    """One cached detection: half-open pixel rectangle on a frame."""

    frame: int
    x0: int
    y0: int
    x1: int
    y1: int
    score: float = 1.0


@dataclass(frozen=True)
class BoxTrack:
    """Cached detector output for one clip."""

    clip_id: str
    boxes: tuple[Box, ...] = ()

    def validate(self, t: int, h: int, w: int) -> None:
        """Raise ValidationError naming the first box outside a (t, h, w) volume."""
        for index, box in enumerate(self.boxes):
            inside = (
                0 <= box.x0 < box.x1 <= w
                and 0 <= box.y0 < box.y1 <= h
                and 0 <= box.frame < t
                and 0.0 <= box.score <= 1.0
            )
            if not inside:
                raise ValidationError(
                    f"clip {self.clip_id!r}: box #{index} {tuple(box)} does not fit "
                    f"a volume of t={t}, h={h}, w={w}"
                )


@dataclass(frozen=True, eq=False)
class HumanMask:
    """Binary T x H x W volume, 1 on actor pixels."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask)
        if mask.ndim != 3:
            raise ValidationError(f"mask must be T x H x W, got shape {mask.shape}")
        if mask.size and not np.all((mask == 0) | (mask == 1)):
            raise ValidationError("mask values must be 0 or 1")
        values = np.array(mask, dtype=np.uint8, copy=True, order="C")
        values.setflags(write=False)
        object.__setattr__(self, "mask", values)

    @classmethod
    def ones(cls, t: int, h: int, w: int) -> "HumanMask":
        return cls(np.ones((t, h, w), dtype=np.uint8))

    @classmethod
    def zeros(cls, t: int, h: int, w: int) -> "HumanMask":
        return cls(np.zeros((t, h, w), dtype=np.uint8))

    @property
    def shape(self) -> tuple[int, int, int]:
        t, h, w = self.mask.shape
        return (int(t), int(h), int(w))

    def check_matches(self, clip: VideoClip) -> None:
        if self.shape != clip.shape[:3]:
            raise ValidationError(
                f"mask shape {self.shape} does not match clip {clip.clip_id!r} of shape {clip.shape[:3]}"
            )


def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    """Write to a temp file beside `path` and rename it into place."""
    target = Path(path)
    handle = tempfile.NamedTemporaryFile(
        dir=target.parent or Path("."), prefix=f".{target.name}.", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def encode_clip(clip: VideoClip) -> bytes:
    """Serialize a clip to `.vclip` bytes."""
    header = VCLIP_HEADER.pack(VCLIP_MAGIC, VCLIP_VERSION, clip.t, clip.h, clip.w, clip.c)
    return header + clip.frames.tobytes(order="C")


def decode_clip(data: bytes, clip_id: str = "", source: str = "<bytes>") -> VideoClip:
    """Parse `.vclip` bytes.

    Raises:
        ClipFormatError: bad magic, version or trailing bytes
        ClipTruncatedError: header or payload shorter than declared
        ValidationError: a zero dim or an unsupported channel count
    """
    if len(data) < 4 or data[:4] != VCLIP_MAGIC:
        raise ClipFormatError(f"{source}: not a .vclip container (bad magic {data[:4]!r})")
    if len(data) < VCLIP_HEADER.size:
        raise ClipTruncatedError(
            f"{source}: header is {len(data)} bytes, expected {VCLIP_HEADER.size}"
        )
    _, version, t, h, w, c = VCLIP_HEADER.unpack_from(data)
    if version != VCLIP_VERSION:
        raise ClipFormatError(f"{source}: unsupported .vclip version {version}")
    if 0 in (t, h, w, c):
        raise ValidationError(f"{source}: zero dimension in header t={t}, h={h}, w={w}, c={c}")
    expected = t * h * w * c
    payload = memoryview(data)[VCLIP_HEADER.size :]
    if len(payload) < expected:
        raise ClipTruncatedError(
            f"{source}: payload is {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise ClipFormatError(
            f"{source}: {len(payload) - expected} trailing bytes after the declared payload"
        )
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(t, h, w, c)
    return VideoClip(frames, clip_id=clip_id)


def load_clip(path: str | Path) -> VideoClip:
    """Read a `.vclip` file; the clip id is the file stem."""
    path = Path(path)
    data = path.read_bytes()
    return decode_clip(data, clip_id=path.stem, source=str(path))


def save_clip(clip: VideoClip, path: str | Path) -> None:
    """Write a clip as a `.vclip` container, atomically."""
    try:
        write_bytes_atomic(path, encode_clip(clip))
    except OSError as e:
        raise OSError(e.errno, f"cannot write clip: {e.strerror or e}", str(path)) from e


def rasterize_masks(
    boxes: BoxTrack,
    t: int,
    h: int,
    w: int,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> HumanMask:
    """Union of the boxes scoring at least `score_threshold`, per frame."""
    if not 0.0 <= score_threshold <= 1.0:
        raise ValidationError(f"score threshold {score_threshold} outside [0, 1]")
    boxes.validate(t, h, w)
    mask = np.zeros((t, h, w), dtype=np.uint8)
    for box in boxes.boxes:
        if box.score >= score_threshold:
            mask[box.frame, box.y0 : box.y1, box.x0 : box.x1] = 1
    return HumanMask(mask)


def foreground_ratio(mask: HumanMask) -> float:
    """Fraction of voxels marked as actor: sum(m) / (T*H*W)."""
    total = mask.mask.size
    return int(np.count_nonzero(mask.mask)) / total


def mask_to_clip(mask: HumanMask, clip_id: str = "") -> VideoClip:
    """Single-channel 0/255 clip of a mask, for saving and inspection."""
    return VideoClip(mask.mask[..., np.newaxis] * np.uint8(255), clip_id=clip_id)


@dataclass(frozen=True)
class ClipSample:
    """A clip with its class index, cached boxes and rasterized mask."""

    clip: VideoClip
    label: int
    boxes: BoxTrack
    mask: HumanMask | None = None


@dataclass(frozen=True)
class ClipDataset:
    """Ordered collection of samples over a fixed number of classes."""

    samples: tuple[ClipSample, ...]
    num_classes: int

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValidationError(f"a dataset needs at least 2 classes, got {self.num_classes}")
        for sample in self.samples:
            if not 0 <= sample.label < self.num_classes:
                raise ValidationError(
                    f"clip {sample.clip.clip_id!r}: label {sample.label} outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def clips(self) -> list[VideoClip]:
        return [s.clip for s in self.samples]

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    @property
    def masks(self) -> list[HumanMask | None]:
        return [s.mask for s in self.samples]

    def subset(self, indices) -> "ClipDataset":
        """Samples at `indices`, in that order."""
        return ClipDataset(tuple(self.samples[i] for i in indices), self.num_classes)
