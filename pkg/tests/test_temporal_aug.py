"""
Tests for temporal transforms.
"""

from collections import Counter

import numpy as np
import pytest

from tests.rng_doubles import ScriptedRng
from vidaug.clip_core import SeededRng, VideoClip
from vidaug.errors import ConfigurationError, ValidationError
from vidaug.temporal_aug import (
    ALL_TEMPORAL_KINDS,
    TemporalKind,
    TemporalOp,
    apply_temporal,
    drop_indices,
    parse_temporal_kind,
    sample_temporal_op,
    t_drop,
    t_half,
    t_reverse,
)


def numbered(*values):
    """Clip whose frame i is filled with values[i]."""
    frames = np.stack([np.full((2, 2, 1), v, dtype=np.uint8) for v in values])
    return VideoClip(frames, clip_id="n")


def frame_values(clip):
    return [int(clip.frames[i, 0, 0, 0]) for i in range(clip.t)]


class TestTHalf:
    """Test T-Half."""

    @pytest.mark.parametrize(
        "values,expected",
        [
            ([1, 2, 3, 4, 5, 6, 7, 8], [1, 2, 3, 4, 1, 2, 3, 4]),
            ([1, 2], [1, 1]),
            ([1, 2, 3], [1, 2, 1]),
            ([1, 2, 3, 4, 5], [1, 2, 3, 1, 2]),
        ],
    )
    def test_examples(self, values, expected):
        assert frame_values(t_half(numbered(*values))) == expected

    def test_single_frame_rejected(self):
        with pytest.raises(ValidationError):
            t_half(numbered(1))

    def test_idempotent_for_even_t(self):
        clip = numbered(*range(1, 11))
        once = t_half(clip)
        assert t_half(once).pixels_equal(once)

    def test_sampled_on_single_frame(self):
        """A sampled T-Half passes a one-frame clip through."""
        clip = numbered(9)
        out = apply_temporal(clip, TemporalOp(TemporalKind.T_HALF), SeededRng(0))
        assert out.pixels_equal(clip)


class TestTDrop:
    """Test T-Drop."""

    def test_zero_probability(self):
        clip = numbered(1, 2, 3, 4)
        assert t_drop(clip, SeededRng(0), p=0.0).pixels_equal(clip)

    def test_forced_decisions(self):
        """Frame 0 kept, then (drop, keep, drop) gives [1, 1, 3, 3]."""
        out = t_drop(numbered(1, 2, 3, 4), ScriptedRng([0.1, 0.9, 0.2]), p=0.5)
        assert frame_values(out) == [1, 1, 3, 3]

    def test_slow_down(self):
        """Dropping frame 1 of [1, 2] gives [1, 1]."""
        assert frame_values(t_drop(numbered(1, 2), ScriptedRng([0.0]))) == [1, 1]

    def test_runs_repeat_last_kept_frame(self):
        """Chained drops freeze on the last kept output frame."""
        out = t_drop(numbered(1, 2, 3, 4), ScriptedRng([0.1, 0.1, 0.1]))
        assert frame_values(out) == [1, 1, 1, 1]

    def test_unchained_uses_previous_input(self):
        """Without chaining a drop copies the previous input frame."""
        out = t_drop(numbered(1, 2, 3, 4), ScriptedRng([0.1, 0.1, 0.1]), chain=False)
        assert frame_values(out) == [1, 1, 2, 3]

    def test_certain_drop(self):
        """p = 1 gives t copies of frame 0."""
        assert frame_values(t_drop(numbered(5, 6, 7), SeededRng(3), p=1.0)) == [5, 5, 5]

    def test_single_frame(self):
        """A one-frame clip draws nothing and is unchanged."""
        assert frame_values(t_drop(numbered(9), ScriptedRng([]))) == [9]

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_probability_range(self, p):
        with pytest.raises(ValidationError):
            t_drop(numbered(1, 2), SeededRng(0), p=p)

    @pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
    def test_empirical_drop_rate(self, p):
        """Over 10^4 frames after the first, the drop rate is p +- 0.02."""
        n = 10_000
        indices = drop_indices(n + 1, SeededRng(77), p)
        dropped = np.count_nonzero(indices[1:] != np.arange(1, n + 1))
        assert abs(dropped / n - p) <= 0.02


class TestTReverse:
    """Test T-Reverse."""

    def test_reverses(self):
        assert frame_values(t_reverse(numbered(1, 2, 3, 4))) == [4, 3, 2, 1]

    def test_single_frame(self):
        clip = numbered(3)
        assert t_reverse(clip).pixels_equal(clip)

    def test_involution(self):
        clip = numbered(*range(7))
        assert t_reverse(t_reverse(clip)).pixels_equal(clip)


class TestFrameMembership:
    """Every temporal op only permutes or duplicates frames."""

    @pytest.mark.parametrize("kind", ALL_TEMPORAL_KINDS)
    def test_outputs_are_input_frames(self, kind):
        rng = np.random.default_rng(5)
        clip = VideoClip(rng.integers(0, 256, size=(8, 4, 4, 3), dtype=np.uint8))
        for seed in range(10):
            out = apply_temporal(clip, TemporalOp(kind), SeededRng(seed))
            assert out.shape == clip.shape
            for f in range(out.t):
                assert any(np.array_equal(out.frames[f], clip.frames[g]) for g in range(clip.t))


class TestSampleTemporalOp:
    """Test temporal op sampling."""

    def test_deterministic(self):
        assert sample_temporal_op(SeededRng(8)) == sample_temporal_op(SeededRng(8))

    def test_tdrop_carries_default_probability(self):
        op = sample_temporal_op(ScriptedRng([2]))
        assert op.kind is TemporalKind.T_DROP
        assert op.drop_prob == 0.5

    def test_uniform_frequencies(self):
        """Each kind is drawn 0.25 +- 0.02 of the time."""
        rng = SeededRng(31)
        n = 10_000
        counts = Counter(sample_temporal_op(rng).kind for _ in range(n))
        for kind in ALL_TEMPORAL_KINDS:
            assert abs(counts[kind] / n - 0.25) <= 0.02

    def test_restricted_pool(self):
        assert sample_temporal_op(SeededRng(0), pool=[TemporalKind.T_REVERSE]).kind is TemporalKind.T_REVERSE

    def test_empty_pool(self):
        with pytest.raises(ConfigurationError):
            sample_temporal_op(SeededRng(0), pool=[])

    @pytest.mark.parametrize("name", ["T-Half", "thalf", "t_half"])
    def test_parse(self, name):
        assert parse_temporal_kind(name) is TemporalKind.T_HALF

    def test_parse_unknown(self):
        with pytest.raises(ConfigurationError):
            parse_temporal_kind("t-shuffle")
