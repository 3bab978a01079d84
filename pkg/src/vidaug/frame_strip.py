"""Horizontal frame strips as binary PGM (grayscale) or PPM (colour) images."""

from pathlib import Path

import numpy as np

from .clip_core import VideoClip, write_bytes_atomic


def strip_array(clip: VideoClip) -> np.ndarray:
    """H x (T*W) x C array with the frames laid left to right."""
    return np.concatenate(list(clip.frames), axis=1)


def encode_strip(clip: VideoClip) -> bytes:
    strip = strip_array(clip)
    height, width = strip.shape[:2]
    magic = b"P5" if clip.c == 1 else b"P6"
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(strip).tobytes()


def strip_suffix(clip: VideoClip) -> str:
    return ".pgm" if clip.c == 1 else ".ppm"


def write_strip(clip: VideoClip, path: str | Path) -> None:
    write_bytes_atomic(path, encode_strip(clip))
