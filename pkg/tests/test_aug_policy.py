"""
Tests for augmentation policies: weak views, intra strategies, the
two-branch strong augmentation and policy files.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

from tests.rng_doubles import ScriptedRng
from vidaug.actor_cutmix import MixConfig, actor_cutmix_batch
from vidaug.aug_policy import (
    AugMode,
    AugmentedSample,
    AugPolicy,
    WeakAugConfig,
    apply_policy,
    cascaded_intra_cross,
    center_crop,
    intra_cascaded,
    intra_sample_one,
    load_policy,
    mix_targets,
    parse_mode,
    policy_from_mapping,
    policy_to_mapping,
    requires_masks,
    strong_augment_batch,
    weak_augment,
)
from vidaug.clip_core import HumanMask, SeededRng, SoftLabel, VideoClip
from vidaug.errors import ConfigurationError, ValidationError
from vidaug.photo_geo_aug import PhotoGeoKind, ResolvedOp, apply_clip_coherent
from vidaug.temporal_aug import TemporalKind, t_reverse

TEST_DATA = Path(__file__).parent / "test-data"

IDENTITY_POOLS = dict(photo_geo_pool=(PhotoGeoKind.IDENTITY,), temporal_pool=(TemporalKind.IDENTITY,))


def random_clip(seed, shape=(4, 6, 6, 3), clip_id=None):
    rng = np.random.default_rng(seed)
    return VideoClip(rng.integers(0, 256, size=shape, dtype=np.uint8), clip_id=clip_id or f"c{seed}")


def random_mask(seed, shape=(4, 6, 6)):
    return HumanMask(np.random.default_rng(seed + 1000).integers(0, 2, size=shape))


def batch(n, shape=(4, 6, 6, 3), num_classes=3):
    clips = [random_clip(i, shape) for i in range(n)]
    masks = [random_mask(i, shape[:3]) for i in range(n)]
    labels = [SoftLabel.one_hot(i % num_classes, num_classes) for i in range(n)]
    return clips, masks, labels


class TestWeakAugment:
    """Test flip, scale and crop."""

    def test_identity_config(self):
        """No flip, unit scale and no crop leave the clip unchanged."""
        clip = random_clip(0)
        cfg = WeakAugConfig(flip_prob=0.0, scale_range=(1.0, 1.0))
        assert weak_augment(clip, cfg, SeededRng(3)).pixels_equal(clip)

    def test_flip_twice(self):
        """Two forced flips restore the clip."""
        clip = random_clip(1)
        cfg = WeakAugConfig(flip_prob=1.0, scale_range=(1.0, 1.0))
        once = weak_augment(clip, cfg, ScriptedRng([0.0, 0.0, 0, 0]))
        assert np.array_equal(once.frames, clip.frames[:, :, ::-1])
        twice = weak_augment(once, cfg, ScriptedRng([0.0, 0.0, 0, 0]))
        assert twice.pixels_equal(clip)

    def test_crop_window(self):
        """A 2x2 crop at offset (1, 1) of a 4x4 clip."""
        clip = random_clip(2, (1, 4, 4, 1))
        cfg = WeakAugConfig(flip_prob=0.5, scale_range=(1.0, 1.0), crop_size=(2, 2))
        out = weak_augment(clip, cfg, ScriptedRng([0.9, 0.0, 1, 1]))
        assert np.array_equal(out.frames, clip.frames[:, 1:3, 1:3])

    def test_same_transform_every_frame(self):
        clip = VideoClip(np.repeat(random_clip(3, (1, 8, 8, 3)).frames, 3, axis=0))
        out = weak_augment(clip, WeakAugConfig(crop_size=(6, 6)), SeededRng(9))
        assert np.array_equal(out.frames[0], out.frames[1])
        assert np.array_equal(out.frames[0], out.frames[2])

    def test_upscale_nearest(self):
        """Scale 2 duplicates each pixel into a 2x2 block."""
        clip = VideoClip(np.array([[1, 2], [3, 4]], dtype=np.uint8).reshape(1, 2, 2, 1))
        cfg = WeakAugConfig(flip_prob=0.0, scale_range=(2.0, 2.0), crop_size=(4, 4))
        out = weak_augment(clip, cfg, ScriptedRng([0.5, 0.5, 0, 0]))
        assert out.frames[0, :, :, 0].tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]

    def test_infeasible_crop(self):
        cfg = WeakAugConfig(flip_prob=0.0, scale_range=(1.0, 1.0), crop_size=(5, 5))
        with pytest.raises(ValidationError):
            weak_augment(random_clip(4, (1, 4, 4, 1)), cfg, SeededRng(0))

    @pytest.mark.parametrize(
        "kwargs",
        [dict(flip_prob=1.5), dict(scale_range=(0.0, 1.0)), dict(scale_range=(1.2, 1.1)), dict(crop_size=(0, 4))],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            WeakAugConfig(**kwargs)

    def test_center_crop(self):
        clip = random_clip(5, (1, 6, 6, 1))
        assert np.array_equal(center_crop(clip, (2, 4)).frames, clip.frames[:, 2:4, 1:5])
        assert center_crop(clip, None) is clip


class TestIntraStrategies:
    """Test the single-clip strategies."""

    def test_identity_pools(self):
        clip = random_clip(6)
        policy = AugPolicy(AugMode.INTRA_CASCADED, **IDENTITY_POOLS)
        assert intra_cascaded(clip, policy, SeededRng(1)).pixels_equal(clip)

    def test_forced_cascade(self):
        """Brightness (sign -), Identity, then T-Reverse."""
        clip = random_clip(7)
        policy = AugPolicy(
            AugMode.INTRA_CASCADED, photo_geo_pool=(PhotoGeoKind.IDENTITY, PhotoGeoKind.BRIGHTNESS)
        )
        out = intra_cascaded(clip, policy, ScriptedRng([1, 0.5, 0, 0.3, -1, 3]))
        expected = t_reverse(apply_clip_coherent(clip, ResolvedOp.of(PhotoGeoKind.BRIGHTNESS, 0.5)))
        assert out.pixels_equal(expected)

    def test_deterministic(self):
        clip = random_clip(8)
        policy = AugPolicy(AugMode.INTRA_CASCADED)
        assert intra_cascaded(clip, policy, SeededRng(5)).pixels_equal(intra_cascaded(clip, policy, SeededRng(5)))

    def test_single_frame_clip(self):
        """Default pools, including T-Half, never fail on a one-frame clip."""
        clip = random_clip(13, (1, 4, 4, 1))
        policy = AugPolicy()
        for seed in range(200):
            assert intra_cascaded(clip, policy, SeededRng(seed)).shape == clip.shape
            assert intra_sample_one(clip, policy, SeededRng(seed)).shape == clip.shape
        clips = [clip, random_clip(14, (1, 4, 4, 1))]
        masks = [random_mask(13, (1, 4, 4))] * 2
        labels = [SoftLabel.one_hot(0, 2), SoftLabel.one_hot(1, 2)]
        for seed in range(200):
            out = apply_policy(clips, masks, labels, policy, SeededRng(seed))
            assert [s.clip.shape for s in out] == [(1, 4, 4, 1)] * 2

    def test_sample_one_photo_branch(self):
        """A coin below 0.5 applies only the op pair."""
        clip = random_clip(9)
        policy = AugPolicy(AugMode.INTRA_SAMPLE_ONE, photo_geo_pool=(PhotoGeoKind.IDENTITY,))
        rng = ScriptedRng([0.1, 0, 0.2, 0, 0.7])
        assert intra_sample_one(clip, policy, rng).pixels_equal(clip)
        assert rng.remaining == 0

    def test_sample_one_temporal_branch(self):
        clip = random_clip(10)
        policy = AugPolicy(AugMode.INTRA_SAMPLE_ONE)
        out = intra_sample_one(clip, policy, ScriptedRng([0.9, 3]))
        assert out.pixels_equal(t_reverse(clip))

    def test_sample_one_branch_frequency(self):
        """Each branch is taken 0.5 +- 0.02 of the time."""
        clip = random_clip(11, (2, 4, 4, 1))
        policy = AugPolicy(
            AugMode.INTRA_SAMPLE_ONE,
            photo_geo_pool=(PhotoGeoKind.IDENTITY,),
            temporal_pool=(TemporalKind.T_REVERSE,),
        )
        rng = SeededRng(12)
        n = 10_000
        reversed_count = sum(
            not intra_sample_one(clip, policy, rng).pixels_equal(clip) for _ in range(n)
        )
        assert abs(reversed_count / n - 0.5) <= 0.02


class TestStrongAugmentBatch:
    """Test the per-batch branch draw."""

    def test_cross_branch(self):
        """p above 1 - branch_prob runs ActorCutMix on the whole batch."""
        clips, masks, labels = batch(3)
        policy = AugPolicy()
        out = strong_augment_batch(clips, masks, labels, policy, ScriptedRng([0.9]))
        expected = actor_cutmix_batch(clips, masks, labels, policy.cross_cfg)
        for sample, mixed in zip(out, expected):
            assert sample.branch == "cross"
            assert sample.clip.pixels_equal(mixed.clip)
            assert np.array_equal(sample.label.probs, mixed.label.probs)
            assert sample.partner == mixed.partner_index

    def test_intra_branch(self):
        """p at or below 1 - branch_prob runs the cascade with per-clip split seeds."""
        clips, masks, labels = batch(3)
        policy = AugPolicy()
        rng = ScriptedRng([0.5], spawned=[SeededRng(77)])
        out = strong_augment_batch(clips, masks, labels, policy, rng)
        for i, sample in enumerate(out):
            assert sample.branch == "intra"
            assert sample.label is labels[i]
            assert sample.clip.pixels_equal(intra_cascaded(clips[i], policy, SeededRng(77).split(i)))

    def test_missing_masks_on_cross_branch(self):
        clips, _, labels = batch(2)
        with pytest.raises(ConfigurationError, match="masks"):
            strong_augment_batch(clips, None, labels, AugPolicy(), ScriptedRng([0.99]))

    def test_masks_not_needed_on_intra_branch(self):
        clips, _, labels = batch(2)
        out = strong_augment_batch(clips, None, labels, AugPolicy(), ScriptedRng([0.01], spawned=[SeededRng(1)]))
        assert len(out) == 2

    def test_branch_frequency(self):
        """Over 10^4 batches the cross branch is drawn 0.5 +- 0.02 of the time."""
        clips, masks, labels = batch(1, shape=(2, 4, 4, 1))
        policy = AugPolicy(**IDENTITY_POOLS)
        rng = SeededRng(2020)
        n = 10_000
        cross = sum(strong_augment_batch(clips, masks, labels, policy, rng)[0].branch == "cross" for _ in range(n))
        assert abs(cross / n - 0.5) <= 0.02

    def test_branch_prob_one(self):
        clips, masks, labels = batch(2)
        policy = AugPolicy(branch_prob=1.0)
        assert strong_augment_batch(clips, masks, labels, policy, SeededRng(0))[0].branch == "cross"

    def test_independent_of_worker_count(self, monkeypatch):
        clips, masks, labels = batch(5)
        monkeypatch.setenv("VIDAUG_THREADS", "1")
        serial = strong_augment_batch(clips, masks, labels, AugPolicy(branch_prob=0.0), SeededRng(44))
        monkeypatch.setenv("VIDAUG_THREADS", "4")
        parallel = strong_augment_batch(clips, masks, labels, AugPolicy(branch_prob=0.0), SeededRng(44))
        assert all(a.clip.pixels_equal(b.clip) for a, b in zip(serial, parallel))

    def test_length_mismatch(self):
        clips, masks, labels = batch(2)
        with pytest.raises(ValidationError):
            strong_augment_batch(clips, masks, labels[:1], AugPolicy(), SeededRng(0))


class TestCascadedIntraCross:
    """Test the cascaded ablation mode."""

    def test_identity_pools_full_masks(self):
        """With identity ops and full masks the clips come back unchanged."""
        clips, _, labels = batch(2)
        masks = [HumanMask.ones(*c.shape[:3]) for c in clips]
        policy = AugPolicy(AugMode.CASCADED_INTRA_CROSS, **IDENTITY_POOLS)
        out = cascaded_intra_cross(clips, masks, labels, policy, SeededRng(3))
        assert all(s.clip.pixels_equal(c) for s, c in zip(out, clips))
        assert all(s.branch == "cross" for s in out)

    def test_matches_manual_composition(self):
        clips, masks, labels = batch(2)
        policy = AugPolicy(AugMode.CASCADED_INTRA_CROSS)
        out = cascaded_intra_cross(clips, masks, labels, policy, SeededRng(5))
        spawned = SeededRng(5).spawn()
        intra = [intra_cascaded(c, policy, spawned.split(i)) for i, c in enumerate(clips)]
        expected = actor_cutmix_batch(intra, masks, labels, policy.cross_cfg)
        for sample, mixed in zip(out, expected):
            assert sample.clip.pixels_equal(mixed.clip)
            assert sample.lam == mixed.lam


class TestApplyPolicy:
    """Test mode dispatch."""

    def test_empty_batch(self):
        assert apply_policy([], [], [], AugPolicy(), SeededRng(0)) == []

    def test_cross_only(self):
        clips, masks, labels = batch(2)
        out = apply_policy(clips, masks, labels, AugPolicy(AugMode.CROSS_ONLY), SeededRng(0))
        assert [s.partner for s in out] == [1, 0]

    def test_cross_only_without_masks(self):
        clips, _, labels = batch(2)
        with pytest.raises(ConfigurationError):
            apply_policy(clips, None, labels, AugPolicy(AugMode.CROSS_ONLY), SeededRng(0))

    def test_cutmix_only(self):
        clips, _, labels = batch(2)
        out = apply_policy(clips, None, labels, AugPolicy(AugMode.CUTMIX_ONLY), SeededRng(0))
        assert all(s.branch == "cutmix" and 0.0 <= s.lam < 1.0 for s in out)

    def test_background_cutmix_only(self):
        clips, masks, labels = batch(2)
        out = apply_policy(clips, masks, labels, AugPolicy(AugMode.BACKGROUND_CUTMIX_ONLY), SeededRng(0))
        assert [s.label.argmax for s in out] == [0, 1]
        assert all(s.lam == 1.0 for s in out)

    def test_weak_only(self):
        clips, _, labels = batch(2, shape=(2, 8, 8, 3))
        policy = AugPolicy(AugMode.WEAK_ONLY, weak=WeakAugConfig(crop_size=(6, 6)))
        out = apply_policy(clips, None, labels, policy, SeededRng(0))
        assert all(s.clip.shape == (2, 6, 6, 3) and s.branch == "weak" for s in out)

    def test_per_frame_identity(self):
        clips, _, labels = batch(2)
        policy = AugPolicy(AugMode.PER_FRAME, **IDENTITY_POOLS)
        out = apply_policy(clips, None, labels, policy, SeededRng(0))
        assert all(s.clip.pixels_equal(c) for s, c in zip(out, clips))

    @pytest.mark.parametrize("mode", list(AugMode))
    def test_every_mode_keeps_dims(self, mode):
        clips, masks, labels = batch(4)
        out = apply_policy(clips, masks, labels, AugPolicy(mode), SeededRng(11))
        assert len(out) == 4
        for sample, clip in zip(out, clips):
            assert sample.clip.shape == clip.shape
            assert abs(sample.label.probs.sum() - 1.0) <= 1e-9

    def test_requires_masks(self):
        assert requires_masks("StrongAlg1")
        assert requires_masks(AugMode.BACKGROUND_CUTMIX_ONLY)
        assert not requires_masks("intra-cascaded")
        assert not requires_masks(AugMode.CUTMIX_ONLY)


class TestMixTargets:
    """Test retargeting samples to a new label set."""

    def test_retarget(self):
        clip = random_clip(0)
        samples = [AugmentedSample(clip, SoftLabel.uniform(2), 0.75, 1, "cross"), AugmentedSample(clip, SoftLabel.uniform(2))]
        targets = mix_targets(samples, [SoftLabel.one_hot(0, 2), SoftLabel.one_hot(1, 2)])
        assert targets[0].probs.tolist() == [0.75, 0.25]
        assert targets[1].probs.tolist() == [0.0, 1.0]


class TestPolicyFiles:
    """Test reading and writing policy documents."""

    def test_load_identity_yaml(self):
        policy = load_policy(TEST_DATA / "policy-identity.yaml")
        assert policy.mode is AugMode.INTRA_CASCADED
        assert policy.photo_geo_pool == (PhotoGeoKind.IDENTITY,)
        assert policy.weak.flip_prob == 0.0

    def test_load_json(self):
        policy = load_policy(TEST_DATA / "policy-strong.json")
        assert policy == AugPolicy(weak=WeakAugConfig(crop_size=(32, 32)))

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="mixup"):
            load_policy(TEST_DATA / "policy-unknown-key.yaml")

    def test_unknown_op(self):
        with pytest.raises(ConfigurationError, match="Cutout"):
            policy_from_mapping({"photo_geo_pool": ["Cutout"]})

    def test_bad_value(self):
        with pytest.raises(ConfigurationError):
            policy_from_mapping({"alpha": "four"})

    def test_empty_pool_for_intra_mode(self):
        with pytest.raises(ConfigurationError):
            policy_from_mapping({"mode": "IntraCascaded", "temporal_pool": []})

    def test_empty_file_is_default(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "empty.yaml")
            Path(path).write_text("")
            assert load_policy(path) == AugPolicy()

    def test_mapping_round_trip(self):
        policy = AugPolicy(
            AugMode.PER_FRAME,
            photo_geo_pool=(PhotoGeoKind.ROTATE, PhotoGeoKind.SOLARIZE),
            cross_cfg=MixConfig(alpha=2.0, smoothing=False),
            branch_prob=0.25,
            drop_chain=False,
            weak=WeakAugConfig(crop_size=(16, 16)),
        )
        document = json.loads(json.dumps(policy_to_mapping(policy)))
        assert policy_from_mapping(document) == policy

    def test_parse_mode(self):
        assert parse_mode("cascaded-intra-cross") is AugMode.CASCADED_INTRA_CROSS
        with pytest.raises(ConfigurationError):
            parse_mode("mixup")
