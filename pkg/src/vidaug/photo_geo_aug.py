"""
Photometric and geometric frame transforms.

The pool holds fourteen RandAugment-style operations. An operation is first
resolved (sign and physical parameter drawn once), then applied either to
every frame with the same parameters (temporally coherent) or re-resolved for
each frame (the per-frame baseline).

Magnitude table, magnitude m in [0, 1]:

    kind             signed  physical parameter
    Identity         no      none
    AutoContrast     no      none (per-channel min/max stretch)
    Equalize         no      none (per-channel histogram equalization)
    Rotate           yes     angle = +-30 * m degrees, counter-clockwise
    Solarize         no      threshold = 256 * (1 - m); pixels >= threshold inverted
    Posterize        no      bits kept = 8 - round(4 * m)
    ColorSaturation  yes     factor = 1 +- m, blend with grayscale
    Contrast         yes     factor = 1 +- m, blend with mean gray level
    Brightness       yes     factor = 1 +- m, blend with black
    Sharpness        yes     factor = 1 +- m, blend with 3x3 smoothed frame
    ShearX, ShearY   yes     shear = +-0.3 * m, about the frame centre
    TranslateX/Y     yes     offset = +-0.3 * m * width/height

Geometric resampling is nearest neighbour; pixels with no source are filled
with mid-gray (128).
"""

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clip_core import RandomSource, VideoClip, quantize
from .errors import ConfigurationError, ValidationError

FILL_VALUE: int = 128
MAX_ROTATE_DEGREES: float = 30.0
MAX_SHEAR: float = 0.3
MAX_TRANSLATE_FRACTION: float = 0.3
MAX_ENHANCE_DELTA: float = 1.0
MAX_POSTERIZE_DROP: int = 4

_SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class PhotoGeoKind(str, enum.Enum):
    IDENTITY = "Identity"
    AUTO_CONTRAST = "AutoContrast"
    EQUALIZE = "Equalize"
    ROTATE = "Rotate"
    SOLARIZE = "Solarize"
    POSTERIZE = "Posterize"
    COLOR_SATURATION = "ColorSaturation"
    CONTRAST = "Contrast"
    BRIGHTNESS = "Brightness"
    SHARPNESS = "Sharpness"
    SHEAR_X = "ShearX"
    SHEAR_Y = "ShearY"
    TRANSLATE_X = "TranslateX"
    TRANSLATE_Y = "TranslateY"


ALL_KINDS: tuple[PhotoGeoKind, ...] = tuple(PhotoGeoKind)

SIGNED_KINDS: frozenset[PhotoGeoKind] = frozenset(
    {
        PhotoGeoKind.ROTATE,
        PhotoGeoKind.COLOR_SATURATION,
        PhotoGeoKind.CONTRAST,
        PhotoGeoKind.BRIGHTNESS,
        PhotoGeoKind.SHARPNESS,
        PhotoGeoKind.SHEAR_X,
        PhotoGeoKind.SHEAR_Y,
        PhotoGeoKind.TRANSLATE_X,
        PhotoGeoKind.TRANSLATE_Y,
    }
)

GEOMETRIC_KINDS: frozenset[PhotoGeoKind] = frozenset(
    {
        PhotoGeoKind.ROTATE,
        PhotoGeoKind.SHEAR_X,
        PhotoGeoKind.SHEAR_Y,
        PhotoGeoKind.TRANSLATE_X,
        PhotoGeoKind.TRANSLATE_Y,
    }
)


def _normalize_name(name: str) -> str:
    return name.replace("-", "").replace("_", "").replace(" ", "").lower()


_KIND_BY_NAME: dict[str, PhotoGeoKind] = {_normalize_name(k.value): k for k in PhotoGeoKind}
_KIND_BY_NAME["color"] = PhotoGeoKind.COLOR_SATURATION


def parse_kind(name: str | PhotoGeoKind) -> PhotoGeoKind:
    """Look up a kind by name, ignoring case, dashes and underscores."""
    if isinstance(name, PhotoGeoKind):
        return name
    try:
        return _KIND_BY_NAME[_normalize_name(str(name))]
    except KeyError:
        valid = ", ".join(k.value for k in PhotoGeoKind)
        raise ConfigurationError(f"unknown photometric/geometric op {name!r}; valid: {valid}") from None


@dataclass(frozen=True)
class PhotoGeoOp:
    kind: PhotoGeoKind
    magnitude: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if not 0.0 <= self.magnitude <= 1.0:
            raise ValidationError(f"{self.kind.value}: magnitude {self.magnitude} outside [0, 1]")


@dataclass(frozen=True)
class ResolvedOp:
    """An op with its sign and physical parameter frozen."""

    op: PhotoGeoOp
    sign: int = 1
    value: float = 0.0

    @property
    def kind(self) -> PhotoGeoKind:
        return self.op.kind

    @classmethod
    def of(cls, kind: PhotoGeoKind | str, value: float = 0.0, sign: int = 1) -> "ResolvedOp":
        """Build a resolved op from an explicit physical parameter."""
        return cls(PhotoGeoOp(parse_kind(kind), 0.0), sign=sign, value=float(value))


def physical_value(kind: PhotoGeoKind, magnitude: float, sign: int) -> float:
    """Map a magnitude and sign to the kind's physical parameter."""
    if kind == PhotoGeoKind.ROTATE:
        return sign * MAX_ROTATE_DEGREES * magnitude
    if kind == PhotoGeoKind.SOLARIZE:
        return 256.0 * (1.0 - magnitude)
    if kind == PhotoGeoKind.POSTERIZE:
        return float(8 - round(MAX_POSTERIZE_DROP * magnitude))
    if kind in (
        PhotoGeoKind.COLOR_SATURATION,
        PhotoGeoKind.CONTRAST,
        PhotoGeoKind.BRIGHTNESS,
        PhotoGeoKind.SHARPNESS,
    ):
        return 1.0 + sign * MAX_ENHANCE_DELTA * magnitude
    if kind in (PhotoGeoKind.SHEAR_X, PhotoGeoKind.SHEAR_Y):
        return sign * MAX_SHEAR * magnitude
    if kind in (PhotoGeoKind.TRANSLATE_X, PhotoGeoKind.TRANSLATE_Y):
        return sign * MAX_TRANSLATE_FRACTION * magnitude
    return 0.0


def resolve(op: PhotoGeoOp, rng: RandomSource) -> ResolvedOp:
    """Draw the sign of a signed op; everything after this is deterministic."""
    sign = rng.sign() if op.kind in SIGNED_KINDS else 1
    return ResolvedOp(op, sign=sign, value=physical_value(op.kind, op.magnitude, sign))


def sample_two_ops(
    pool: Sequence[PhotoGeoKind], rng: RandomSource
) -> tuple[PhotoGeoOp, PhotoGeoOp]:
    """Two independent uniform draws from the pool, magnitudes uniform in [0, 1]."""
    if not pool:
        raise ConfigurationError("photometric/geometric op pool is empty")
    kinds = list(pool)
    first = PhotoGeoOp(kinds[rng.integer(len(kinds))], rng.uniform())
    second = PhotoGeoOp(kinds[rng.integer(len(kinds))], rng.uniform())
    return first, second


# Kernels below take an N x H x W x C uint8 stack; frame statistics are per frame.
# Equalize and the sharpness blur follow PIL's ImageOps.equalize and SMOOTH
# filter but are not delegated to PIL: every op here must round half to even
# through `quantize`, and PIL's enhancers truncate.


def _luma(stack: np.ndarray) -> np.ndarray:
    """N x H x W x 1 float gray level."""
    if stack.shape[-1] == 1:
        return stack.astype(np.float64)
    return np.rint(stack.astype(np.float64) @ _LUMA_WEIGHTS)[..., np.newaxis]


def _blend(degenerate: np.ndarray, stack: np.ndarray, factor: float) -> np.ndarray:
    return quantize(degenerate * (1.0 - factor) + stack.astype(np.float64) * factor)


def _auto_contrast(stack: np.ndarray) -> np.ndarray:
    values = stack.astype(np.float64)
    lo = values.min(axis=(1, 2), keepdims=True)
    hi = values.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    stretched = (values - lo) * 255.0 / np.where(span > 0, span, 1.0)
    return np.where(span > 0, quantize(stretched), stack)


def _equalize_channel(channel: np.ndarray) -> np.ndarray:
    histogram = np.bincount(channel.ravel(), minlength=256)
    used = histogram[histogram > 0]
    if used.size <= 1:
        return channel
    step = (int(used.sum()) - int(used[-1])) // 255
    if step == 0:
        return channel
    lut = (step // 2 + np.concatenate(([0], np.cumsum(histogram)[:-1]))) // step
    return np.clip(lut, 0, 255).astype(np.uint8)[channel]


def _equalize(stack: np.ndarray) -> np.ndarray:
    out = np.empty_like(stack)
    for n in range(stack.shape[0]):
        for c in range(stack.shape[3]):
            out[n, :, :, c] = _equalize_channel(stack[n, :, :, c])
    return out


def _smooth(stack: np.ndarray) -> np.ndarray:
    values = stack.astype(np.float64)
    h, w = stack.shape[1:3]
    if h < 3 or w < 3:
        return values
    smoothed = values.copy()
    inner = np.zeros_like(values[:, 1:-1, 1:-1, :])
    for dy in range(3):
        for dx in range(3):
            inner += _SMOOTH_KERNEL[dy, dx] * values[:, dy : dy + h - 2, dx : dx + w - 2, :]
    smoothed[:, 1:-1, 1:-1, :] = inner
    return smoothed


def _pull_coordinates(kind: PhotoGeoKind, value: float, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Source (x, y) for every output pixel, before rounding."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    if kind == PhotoGeoKind.ROTATE:
        theta = math.radians(value)
        cos, sin = math.cos(theta), math.sin(theta)
        dx, dy = xs - cx, ys - cy
        return cx + cos * dx - sin * dy, cy + sin * dx + cos * dy
    if kind == PhotoGeoKind.SHEAR_X:
        return xs + value * (ys - cy), ys
    if kind == PhotoGeoKind.SHEAR_Y:
        return xs, ys + value * (xs - cx)
    if kind == PhotoGeoKind.TRANSLATE_X:
        return xs - value * w, ys
    return xs, ys - value * h


def _warp(stack: np.ndarray, kind: PhotoGeoKind, value: float) -> np.ndarray:
    h, w = stack.shape[1:3]
    src_x, src_y = _pull_coordinates(kind, value, h, w)
    sx = np.rint(src_x).astype(np.int64)
    sy = np.rint(src_y).astype(np.int64)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    gathered = stack[:, np.clip(sy, 0, h - 1), np.clip(sx, 0, w - 1), :]
    return np.where(valid[np.newaxis, :, :, np.newaxis], gathered, np.uint8(FILL_VALUE))


def _apply_stack(stack: np.ndarray, rop: ResolvedOp) -> np.ndarray:
    kind = rop.kind
    if kind in GEOMETRIC_KINDS:
        return _warp(stack, kind, rop.value)
    if kind == PhotoGeoKind.IDENTITY:
        return stack.copy()
    if kind == PhotoGeoKind.AUTO_CONTRAST:
        return _auto_contrast(stack)
    if kind == PhotoGeoKind.EQUALIZE:
        return _equalize(stack)
    if kind == PhotoGeoKind.SOLARIZE:
        return np.where(stack >= rop.value, 255 - stack, stack).astype(np.uint8)
    if kind == PhotoGeoKind.POSTERIZE:
        bits = int(rop.value)
        keep = np.uint8((0xFF << (8 - bits)) & 0xFF)
        return stack & keep
    if kind == PhotoGeoKind.BRIGHTNESS:
        return _blend(np.zeros(1), stack, rop.value)
    if kind == PhotoGeoKind.COLOR_SATURATION:
        return _blend(_luma(stack), stack, rop.value)
    if kind == PhotoGeoKind.CONTRAST:
        mean = np.rint(_luma(stack).mean(axis=(1, 2, 3), keepdims=True))
        return _blend(mean, stack, rop.value)
    if kind == PhotoGeoKind.SHARPNESS:
        return _blend(_smooth(stack), stack, rop.value)
    raise ValidationError(f"no pixel kernel for {kind.value}")


def apply_frame(frame: np.ndarray, rop: ResolvedOp) -> np.ndarray:
    """Transform one H x W x C frame."""
    frame = np.asarray(frame, dtype=np.uint8)
    if frame.ndim != 3:
        raise ValidationError(f"expected an H x W x C frame, got shape {frame.shape}")
    return _apply_stack(frame[np.newaxis], rop)[0]


def apply_clip_coherent(clip: VideoClip, rop: ResolvedOp) -> VideoClip:
    """Same op, same parameters, every frame."""
    return clip.with_frames(_apply_stack(clip.frames, rop))


def apply_clip_per_frame(
    clip: VideoClip,
    op: PhotoGeoOp,
    rng: RandomSource,
    redraw_magnitude: bool = False,
) -> VideoClip:
    """Re-resolve the op independently for each frame.

    With `redraw_magnitude` each frame also draws its own magnitude
    (before its sign), so unsigned ops vary across frames too.
    """
    frames = []
    for i in range(clip.t):
        frame_op = PhotoGeoOp(op.kind, rng.uniform()) if redraw_magnitude else op
        frames.append(_apply_stack(clip.frames[i : i + 1], resolve(frame_op, rng))[0])
    return clip.with_frames(np.stack(frames))
