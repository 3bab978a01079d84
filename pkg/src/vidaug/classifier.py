"""
Desk-scale linear softmax classifier over pooled clip features.

Each frame is average-pooled to a 4x4 grid (bucket edges floor(i*h/4)),
scaled to [0, 1] and flattened in (t, y, x, c) order, so D = t * 16 * c.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clip_core import SoftLabel, VideoClip, write_bytes_atomic
from .errors import ClipFormatError, ClipTruncatedError, NumericError, ValidationError

POOL_SIZE: int = 4
CHECKPOINT_MAGIC: bytes = b"VSSL"
CHECKPOINT_HEADER = struct.Struct("<4sIII")


def feature_dim(t: int, c: int) -> int:
    return t * POOL_SIZE * POOL_SIZE * c


def _bucket_starts(n: int) -> np.ndarray:
    return (np.arange(POOL_SIZE) * n) // POOL_SIZE


def _pool(stack: np.ndarray) -> np.ndarray:
    """N x D features of an N x T x H x W x C uint8 stack."""
    n, _, h, w, _ = stack.shape
    row_starts, col_starts = _bucket_starts(h), _bucket_starts(w)
    values = stack.astype(np.float64)
    sums = np.add.reduceat(np.add.reduceat(values, row_starts, axis=2), col_starts, axis=3)
    rows = np.diff(np.append(row_starts, h))
    cols = np.diff(np.append(col_starts, w))
    counts = rows[:, np.newaxis] * cols[np.newaxis, :]
    pooled = sums / counts[np.newaxis, np.newaxis, :, :, np.newaxis]
    return (pooled / 255.0).reshape(n, -1)


def _check_poolable(clip: VideoClip) -> None:
    if clip.h < POOL_SIZE or clip.w < POOL_SIZE:
        raise ValidationError(
            f"clip {clip.clip_id!r}: frames must be at least {POOL_SIZE}x{POOL_SIZE}, got {clip.h}x{clip.w}"
        )


def featurize(clip: VideoClip) -> np.ndarray:
    """Average-pool every frame to 4x4 and flatten to a float64 vector in [0, 1]."""
    _check_poolable(clip)
    return _pool(clip.frames[np.newaxis])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of an N x K (or K) array."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


@dataclass
class Classifier:
    """Softmax(W f + b) with W of shape K x D and b of length K."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValidationError(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not form a K x D model"
            )
        if self.weights.shape[0] < 2:
            raise ValidationError(f"a classifier needs at least 2 classes, got {self.weights.shape[0]}")

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "Classifier":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    def copy(self) -> "Classifier":
        return Classifier(self.weights.copy(), self.bias.copy())

    def check_finite(self) -> None:
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NumericError("classifier parameters are not finite")


def feature_matrix(clips, dim: int | None = None) -> np.ndarray:
    """Features of several clips as an N x D matrix, pooled in one pass when shapes agree."""
    clips = list(clips)
    if not clips:
        return np.zeros((0, dim or 0))
    for clip in clips:
        _check_poolable(clip)
    if len({clip.shape for clip in clips}) == 1:
        features = _pool(np.stack([clip.frames for clip in clips]))
    else:
        features = np.stack([featurize(clip) for clip in clips])
    if dim is not None and features.shape[1] != dim:
        raise ValidationError(f"clips give {features.shape[1]} features, classifier expects {dim}")
    return features


def predict_features(model: Classifier, features: np.ndarray) -> np.ndarray:
    """N x K probabilities for an N x D feature matrix."""
    model.check_finite()
    if features.ndim != 2 or features.shape[1] != model.dim:
        raise ValidationError(f"feature matrix {features.shape} does not match model dim {model.dim}")
    return softmax(features @ model.weights.T + model.bias)


def forward(model: Classifier, clip: VideoClip) -> SoftLabel:
    probs = predict_features(model, featurize(clip)[np.newaxis, :])[0]
    # renormalise so the label survives its own sum check after float rounding
    return SoftLabel(probs / probs.sum())


def encode_checkpoint(model: Classifier) -> bytes:
    header = CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, model.num_classes, model.dim, 0)
    payload = np.concatenate([model.weights.ravel(), model.bias]).astype("<f8")
    return header + payload.tobytes()


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Classifier:
    if len(data) < CHECKPOINT_HEADER.size:
        raise ClipTruncatedError(f"{source}: checkpoint header is {len(data)} bytes")
    magic, k, d, _reserved = CHECKPOINT_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ClipFormatError(f"{source}: not a checkpoint (bad magic {magic!r})")
    expected = (k * d + k) * 8
    payload = data[CHECKPOINT_HEADER.size :]
    if len(payload) != expected:
        raise ClipTruncatedError(f"{source}: checkpoint payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Classifier(values[: k * d].reshape(k, d), values[k * d :])


def save_checkpoint(model: Classifier, path: str | Path) -> None:
    write_bytes_atomic(path, encode_checkpoint(model))


def load_checkpoint(path: str | Path) -> Classifier:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), source=str(path))
