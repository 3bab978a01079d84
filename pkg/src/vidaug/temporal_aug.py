"""
Temporal transforms: T-Half, T-Drop, T-Reverse and identity.

Every op keeps (t, h, w, c) and only permutes or duplicates whole frames, so
each output frame is bitwise equal to some input frame.
"""

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clip_core import RandomSource, VideoClip
from .errors import ConfigurationError, ValidationError

DEFAULT_DROP_PROB: float = 0.5


class TemporalKind(str, enum.Enum):
    IDENTITY = "Identity"
    T_HALF = "THalf"
    T_DROP = "TDrop"
    T_REVERSE = "TReverse"


ALL_TEMPORAL_KINDS: tuple[TemporalKind, ...] = tuple(TemporalKind)

_KIND_BY_NAME: dict[str, TemporalKind] = {
    k.value.lower(): k for k in TemporalKind
}


def parse_temporal_kind(name: str | TemporalKind) -> TemporalKind:
    if isinstance(name, TemporalKind):
        return name
    key = str(name).replace("-", "").replace("_", "").replace(" ", "").lower()
    try:
        return _KIND_BY_NAME[key]
    except KeyError:
        valid = ", ".join(k.value for k in TemporalKind)
        raise ConfigurationError(f"unknown temporal op {name!r}; valid: {valid}") from None


@dataclass(frozen=True)
class TemporalOp:
    kind: TemporalKind
    drop_prob: float = DEFAULT_DROP_PROB

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", parse_temporal_kind(self.kind))
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValidationError(f"drop probability {self.drop_prob} outside [0, 1]")


def t_half(clip: VideoClip) -> VideoClip:
    """Keep the first ceil(t/2) frames and refill the rest cyclically from them."""
    if clip.t < 2:
        raise ValidationError(f"T-Half needs at least 2 frames, clip {clip.clip_id!r} has {clip.t}")
    kept = math.ceil(clip.t / 2)
    return clip.with_frames(clip.frames[np.arange(clip.t) % kept])


def drop_indices(t: int, rng: RandomSource, p: float = DEFAULT_DROP_PROB, chain: bool = True) -> np.ndarray:
    """
    Source frame index for every output slot of a T-Drop.

    One uniform is drawn per frame after the first; frame i is dropped when
    its draw is below `p`. With `chain` a dropped slot repeats the previous
    OUTPUT frame, otherwise the previous input frame.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"drop probability {p} outside [0, 1]")
    indices = np.arange(t)
    if t < 2:
        return indices
    dropped = rng.uniforms(t - 1) < p
    for i in range(1, t):
        if dropped[i - 1]:
            indices[i] = indices[i - 1] if chain else i - 1
    return indices


def t_drop(
    clip: VideoClip,
    rng: RandomSource,
    p: float = DEFAULT_DROP_PROB,
    chain: bool = True,
) -> VideoClip:
    """Replace frames by their predecessor with probability p; frame 0 is kept."""
    return clip.with_frames(clip.frames[drop_indices(clip.t, rng, p, chain)])


def t_reverse(clip: VideoClip) -> VideoClip:
    return clip.with_frames(clip.frames[::-1])


def sample_temporal_op(
    rng: RandomSource,
    pool: Sequence[TemporalKind] = ALL_TEMPORAL_KINDS,
    drop_prob: float = DEFAULT_DROP_PROB,
) -> TemporalOp:
    """Uniform draw over the pool."""
    if not pool:
        raise ConfigurationError("temporal op pool is empty")
    kinds = list(pool)
    return TemporalOp(kinds[rng.integer(len(kinds))], drop_prob)


def apply_temporal(clip: VideoClip, op: TemporalOp, rng: RandomSource, chain: bool = True) -> VideoClip:
    """Apply a sampled op; T-Half leaves single-frame clips unchanged."""
    if op.kind == TemporalKind.T_HALF:
        if clip.t < 2:
            return clip
        return t_half(clip)
    if op.kind == TemporalKind.T_DROP:
        return t_drop(clip, rng, op.drop_prob, chain)
    if op.kind == TemporalKind.T_REVERSE:
        return t_reverse(clip)
    return clip
