"""
Tests for the pooled-feature softmax classifier and its checkpoint format.
"""

import os
import tempfile

import numpy as np
import pytest

from vidaug.classifier import (
    CHECKPOINT_HEADER,
    Classifier,
    decode_checkpoint,
    encode_checkpoint,
    feature_dim,
    feature_matrix,
    featurize,
    forward,
    load_checkpoint,
    predict_features,
    save_checkpoint,
    softmax,
)
from vidaug.clip_core import VideoClip
from vidaug.errors import ClipFormatError, ClipTruncatedError, NumericError, ValidationError


def constant_clip(value, shape=(2, 8, 8, 3)):
    return VideoClip(np.full(shape, value, dtype=np.uint8))


class TestFeaturize:
    """Test 4x4 average pooling."""

    def test_dimension(self):
        assert featurize(constant_clip(0)).shape == (feature_dim(2, 3),)
        assert feature_dim(2, 3) == 96

    def test_range(self):
        assert not featurize(constant_clip(0)).any()
        assert np.allclose(featurize(constant_clip(255)), 1.0)

    def test_single_bucket(self):
        """Lighting one 2x2 bucket of an 8x8 frame sets exactly one feature."""
        frames = np.zeros((1, 8, 8, 1), dtype=np.uint8)
        frames[0, 2:4, 4:6, 0] = 255
        features = featurize(VideoClip(frames))
        assert features.shape == (16,)
        assert features[1 * 4 + 2] == 1.0
        assert np.count_nonzero(features) == 1

    def test_uneven_buckets(self):
        """A 5-pixel side splits into buckets of 1, 1, 1 and 2 pixels."""
        frames = np.zeros((1, 5, 4, 1), dtype=np.uint8)
        frames[0, 4, :, 0] = 255
        features = featurize(VideoClip(frames)).reshape(4, 4)
        assert np.allclose(features[3], 0.5)
        assert not features[:3].any()

    def test_frame_order(self):
        """Features are laid out frame by frame."""
        frames = np.zeros((2, 4, 4, 1), dtype=np.uint8)
        frames[1] = 255
        features = featurize(VideoClip(frames))
        assert not features[:16].any()
        assert np.allclose(features[16:], 1.0)

    def test_too_small(self):
        with pytest.raises(ValidationError):
            featurize(constant_clip(0, (1, 3, 8, 1)))

    def test_feature_matrix_dim_check(self):
        with pytest.raises(ValidationError):
            feature_matrix([constant_clip(0)], dim=10)
        assert feature_matrix([], dim=5).shape == (0, 5)

    def test_feature_matrix_matches_rows(self):
        """Pooling a batch at once gives each clip's own features."""
        rng = np.random.default_rng(3)
        clips = [VideoClip(rng.integers(0, 256, size=(3, 9, 7, 3), dtype=np.uint8)) for _ in range(4)]
        matrix = feature_matrix(clips, dim=feature_dim(3, 3))
        assert matrix.shape == (4, 144)
        for row, clip in zip(matrix, clips):
            np.testing.assert_allclose(row, featurize(clip), rtol=0, atol=1e-15)

    def test_feature_matrix_rejects_small_clip(self):
        with pytest.raises(ValidationError):
            feature_matrix([constant_clip(0), constant_clip(0, (2, 3, 8, 3))])


class TestForward:
    """Test softmax predictions."""

    def test_zero_model_is_uniform(self):
        label = forward(Classifier.zeros(4, 96), constant_clip(100))
        assert np.allclose(label.probs, 0.25)

    def test_bias_dominates(self):
        model = Classifier.zeros(3, 96)
        model.bias = np.array([10.0, -10.0, -10.0])
        assert forward(model, constant_clip(50)).probs[0] > 0.999

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(scale=20.0, size=(3, 6))
            assert np.allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-9)

    def test_argmax_invariant_to_inverse_scaling(self):
        """Scaling inputs by s and weights by 1/s keeps every prediction."""
        rng = np.random.default_rng(1)
        model = Classifier(rng.normal(size=(3, 16)), np.zeros(3))
        features = rng.random((20, 16))
        scaled = Classifier(model.weights / 4.0, model.bias)
        before = np.argmax(predict_features(model, features), axis=1)
        after = np.argmax(predict_features(scaled, features * 4.0), axis=1)
        assert np.array_equal(before, after)

    def test_non_finite_parameters(self):
        model = Classifier.zeros(2, 96)
        model.weights[0, 0] = np.nan
        with pytest.raises(NumericError):
            forward(model, constant_clip(0))

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            Classifier(np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValidationError):
            Classifier.zeros(1, 3)


class TestCheckpoint:
    """Test the binary checkpoint."""

    def test_layout(self):
        model = Classifier(np.arange(6.0).reshape(2, 3), np.array([0.5, -0.5]))
        data = encode_checkpoint(model)
        assert data[:4] == b"VSSL"
        assert len(data) == CHECKPOINT_HEADER.size + (2 * 3 + 2) * 8
        assert np.frombuffer(data[CHECKPOINT_HEADER.size :], dtype="<f8").tolist() == [0, 1, 2, 3, 4, 5, 0.5, -0.5]

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        model = Classifier(rng.normal(size=(4, 7)), rng.normal(size=4))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "m.vssl")
            save_checkpoint(model, path)
            loaded = load_checkpoint(path)
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.bias, model.bias)

    def test_bad_magic(self):
        data = bytearray(encode_checkpoint(Classifier.zeros(2, 2)))
        data[:4] = b"NOPE"
        with pytest.raises(ClipFormatError):
            decode_checkpoint(bytes(data))

    def test_truncated(self):
        data = encode_checkpoint(Classifier.zeros(2, 2))
        with pytest.raises(ClipTruncatedError):
            decode_checkpoint(data[:-1])
        with pytest.raises(ClipTruncatedError):
            decode_checkpoint(data[:5])
