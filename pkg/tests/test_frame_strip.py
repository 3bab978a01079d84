"""
Tests for frame strip rendering.
"""

import os
import tempfile

import numpy as np

from vidaug.clip_core import VideoClip
from vidaug.frame_strip import encode_strip, strip_array, strip_suffix, write_strip


def ramp_clip(c):
    frames = np.arange(3 * 2 * 2 * c, dtype=np.uint8).reshape(3, 2, 2, c)
    return VideoClip(frames, clip_id="ramp")


class TestFrameStrip:
    """Test PGM/PPM strips."""

    def test_frames_left_to_right(self):
        clip = ramp_clip(1)
        strip = strip_array(clip)
        assert strip.shape == (2, 6, 1)
        assert np.array_equal(strip[:, 2:4], clip.frames[1])

    def test_grayscale_header(self):
        data = encode_strip(ramp_clip(1))
        assert data.startswith(b"P5\n6 2\n255\n")
        assert len(data) == len(b"P5\n6 2\n255\n") + 12

    def test_colour_header(self):
        data = encode_strip(ramp_clip(3))
        assert data.startswith(b"P6\n6 2\n255\n")
        assert len(data) == len(b"P6\n6 2\n255\n") + 36

    def test_suffix(self):
        assert strip_suffix(ramp_clip(1)) == ".pgm"
        assert strip_suffix(ramp_clip(3)) == ".ppm"

    def test_write(self):
        clip = ramp_clip(1)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "ramp.pgm")
            write_strip(clip, path)
            with open(path, "rb") as f:
                data = f.read()
        assert data == encode_strip(clip)
        # first pixel row runs across all three frames
        assert list(data[-12:-6]) == [0, 1, 4, 5, 8, 9]
