#!/usr/bin/env python3
"""
vidaug Augmentation Benchmark

Times the photometric/geometric kernels, coherent versus per-frame
application, the temporal ops and a full strong-augmentation batch.
The purpose is to see where augmentation time goes on a typical clip and
how much the VIDAUG_THREADS worker pool buys on a batch.
"""

import gc
import os
import statistics
import time

import numpy as np

from vidaug.aug_policy import AugPolicy, strong_augment_batch
from vidaug.clip_core import HumanMask, SeededRng, SoftLabel, VideoClip
from vidaug.photo_geo_aug import ALL_KINDS, PhotoGeoOp, apply_clip_coherent, apply_clip_per_frame, resolve
from vidaug.temporal_aug import ALL_TEMPORAL_KINDS, TemporalOp, apply_temporal
from vidaug.workers import THREADS_ENV

CLIP_SHAPE = (16, 112, 112, 3)
BATCH_SIZE = 8


def time_operation(func, iterations=20, warmup=2):
    """Time an operation over multiple iterations with warmup."""
    gc.collect()
    for _ in range(warmup):
        func()
    gc.collect()

    times = []
    for _ in range(iterations):
        start = time.perf_counter()
        func()
        end = time.perf_counter()
        times.append((end - start) * 1000)  # ms

    # Drop the slowest and fastest 10% when there are enough samples
    sorted_times = sorted(times)
    trim = len(times) // 10
    trimmed_times = sorted_times[trim : len(times) - trim] if trim else sorted_times

    return {
        "mean": statistics.mean(trimmed_times),
        "median": statistics.median(trimmed_times),
        "stdev": statistics.stdev(trimmed_times) if len(trimmed_times) > 1 else 0,
        "min": min(trimmed_times),
        "max": max(trimmed_times),
    }


def create_test_clips(n=BATCH_SIZE, shape=CLIP_SHAPE, seed=0):
    """Random clips with a centred actor box as mask."""
    rng = np.random.default_rng(seed)
    t, h, w, _ = shape
    clips, masks = [], []
    for i in range(n):
        clips.append(VideoClip(rng.integers(0, 256, size=shape, dtype=np.uint8), clip_id=f"bench_{i}"))
        mask = np.zeros((t, h, w), dtype=np.uint8)
        mask[:, h // 4 : 3 * h // 4, w // 3 : 2 * w // 3] = 1
        masks.append(HumanMask(mask))
    return clips, masks


def benchmark_kernels():
    """Every op kind at magnitude 0.7, coherent over one clip."""
    print("=" * 75)
    print(f"PHOTOMETRIC / GEOMETRIC KERNELS (clip {'x'.join(map(str, CLIP_SHAPE))})")
    print("=" * 75)

    (clip,), _ = create_test_clips(1)
    results = []
    for kind in ALL_KINDS:
        rop = resolve(PhotoGeoOp(kind, 0.7), SeededRng(1))
        stats = time_operation(lambda: apply_clip_coherent(clip, rop))
        results.append((kind.value, stats))
        print(f"{kind.value:<18} {stats['mean']:8.3f} ms/clip (±{stats['stdev']:6.3f})")

    slowest = max(results, key=lambda r: r[1]["mean"])
    print()
    print(f"Slowest kernel: {slowest[0]} at {slowest[1]['mean']:.3f} ms/clip")
    print()


def benchmark_coherence():
    """Coherent application against per-frame re-resolution of the same op."""
    print("=" * 75)
    print("COHERENT VS PER-FRAME")
    print("=" * 75)

    (clip,), _ = create_test_clips(1)
    for kind in ("Rotate", "Contrast", "Equalize"):
        op = PhotoGeoOp(kind, 0.5)
        coherent = time_operation(lambda: apply_clip_coherent(clip, resolve(op, SeededRng(2))))
        per_frame = time_operation(lambda: apply_clip_per_frame(clip, op, SeededRng(2), redraw_magnitude=True))
        ratio = per_frame["mean"] / coherent["mean"]
        print(f"{kind}:")
        print(f"    Coherent:        {coherent['mean']:8.3f} ms/clip")
        print(f"    Per-frame:       {per_frame['mean']:8.3f} ms/clip ({ratio:4.2f}x)")
    print()


def benchmark_temporal():
    print("=" * 75)
    print("TEMPORAL OPS")
    print("=" * 75)

    (clip,), _ = create_test_clips(1)
    for kind in ALL_TEMPORAL_KINDS:
        op = TemporalOp(kind)
        stats = time_operation(lambda: apply_temporal(clip, op, SeededRng(3)), iterations=200)
        print(f"{kind.value:<18} {stats['mean']:8.3f} ms/clip")
    print()


def benchmark_strong_batch():
    """A full strong-augmentation batch on each branch, at 1 and 4 worker threads."""
    print("=" * 75)
    print(f"STRONG AUGMENTATION BATCH ({BATCH_SIZE} clips)")
    print("=" * 75)

    clips, masks = create_test_clips()
    labels = [SoftLabel.one_hot(i % 4, 4) for i in range(len(clips))]
    previous = os.environ.get(THREADS_ENV)
    try:
        for branch, branch_prob in (("intra", 0.0), ("cross", 1.0)):
            policy = AugPolicy(branch_prob=branch_prob)
            timings = {}
            for threads in (1, 4):
                os.environ[THREADS_ENV] = str(threads)
                timings[threads] = time_operation(
                    lambda: strong_augment_batch(clips, masks, labels, policy, SeededRng(4)), iterations=10
                )
            speedup = timings[1]["mean"] / timings[4]["mean"]
            print(f"{branch} branch:")
            print(f"    1 thread:        {timings[1]['mean']:8.3f} ms/batch")
            print(f"    4 threads:       {timings[4]['mean']:8.3f} ms/batch ({speedup:4.2f}x)")
    finally:
        if previous is None:
            os.environ.pop(THREADS_ENV, None)
        else:
            os.environ[THREADS_ENV] = previous
    print()


if __name__ == "__main__":
    benchmark_kernels()
    benchmark_coherence()
    benchmark_temporal()
    benchmark_strong_batch()
