"""
Tests for the ablation recipes.

Most run on a tiny dataset and budget; the slow ordering tests train the
recipe defaults over five seeds.
"""

import math
import os
import tempfile
from dataclasses import replace

import pytest

from vidaug.ablation import (
    RECIPES,
    SUMMARY_HEADER,
    Variant,
    VariantSummary,
    dumps_summary,
    get_recipe,
    labeled_subset,
    recipe_train_config,
    run_recipe,
)
from vidaug.errors import ConfigurationError
from vidaug.ssl_harness import TrainConfig
from vidaug.synthetic import SyntheticDatasetSpec, generate_synthetic

TINY_DATA = SyntheticDatasetSpec(
    num_classes=2,
    labeled_per_class=2,
    unlabeled_per_class=4,
    test_per_class=2,
    t=2,
    h=8,
    w=8,
    c=1,
    actor_size=3,
    speed=1.0,
)
TINY_TRAIN = TrainConfig(epochs=1, batch_labeled=2, batch_unlabeled=2, tau=0.5)


class TestRecipes:
    """Test the recipe table."""

    def test_names(self):
        assert set(RECIPES) == {
            "coherence",
            "temporal",
            "actorcutmix",
            "intra-combine",
            "intra-cross",
            "scene-invariance",
            "ssl-gain",
            "label-ratio",
        }

    def test_lookup(self):
        assert get_recipe(" Temporal ").name == "temporal"
        with pytest.raises(ConfigurationError, match="valid recipes"):
            get_recipe("mixup")

    def test_baselines_are_supervised(self):
        variants = {v.name: v for v in get_recipe("scene-invariance").variants}
        assert variants["supervised"].policy is None
        assert variants["fixmatch-actorcutmix"].policy is not None

    def test_step_budget(self):
        """Every variant runs ceil(N_u / B_u) steps per epoch."""
        cfg = recipe_train_config(TrainConfig(batch_unlabeled=3), TINY_DATA, seed=4)
        assert cfg.steps_per_epoch == math.ceil(8 / 3)
        assert cfg.seed == 4

    def test_label_ratio_needs_enough_labeled_clips(self):
        with pytest.raises(ConfigurationError, match="labeled_per_class=2"):
            run_recipe("label-ratio", dataset=TINY_DATA, train_cfg=TINY_TRAIN)


class TestLabeledSubset:
    """Test the nested labeled sets of the label-ratio recipe."""

    def test_prefix_is_class_balanced(self):
        splits = generate_synthetic(replace(TINY_DATA, labeled_per_class=5))
        subset = labeled_subset(splits, Variant("supervised@2", None, labeled_per_class=2)).labeled
        assert subset.labels == splits.labeled.labels[:4]
        assert sorted(subset.labels) == [0, 0, 1, 1]
        assert all(a is b for a, b in zip(subset.samples, splits.labeled.samples[:4], strict=True))

    def test_other_splits_untouched(self):
        splits = generate_synthetic(replace(TINY_DATA, labeled_per_class=3))
        subset = labeled_subset(splits, Variant("supervised@1", None, labeled_per_class=1))
        assert subset.unlabeled is splits.unlabeled
        assert subset.test_decorrelated is splits.test_decorrelated

    def test_without_count_is_identity(self):
        splits = generate_synthetic(TINY_DATA)
        assert labeled_subset(splits, Variant("coherent", None)) is splits


@pytest.mark.slow
class TestRunRecipe:
    """Test whole recipe runs."""

    def test_summary_per_variant(self):
        summaries = run_recipe("scene-invariance", seeds=2, dataset=TINY_DATA, train_cfg=TINY_TRAIN)
        assert [s.variant for s in summaries] == ["supervised", "fixmatch-actorcutmix"]
        for s in summaries:
            assert s.seeds == 2
            assert 0.0 <= s.mean_acc_biased <= 1.0
            assert 0.0 <= s.mean_acc_decorrelated <= 1.0
            assert s.std_acc_biased >= 0.0 and s.std_acc_decorrelated >= 0.0

    def test_deterministic(self):
        first = run_recipe("temporal", dataset=TINY_DATA, train_cfg=TINY_TRAIN, variants=["t-drop"])
        second = run_recipe("temporal", dataset=TINY_DATA, train_cfg=TINY_TRAIN, variants=["t-drop"])
        assert first == second

    def test_outputs_and_progress(self):
        messages = []
        with tempfile.TemporaryDirectory() as tmpdir:
            run_recipe(
                "coherence",
                base_seed=7,
                dataset=TINY_DATA,
                train_cfg=TINY_TRAIN,
                output_dir=tmpdir,
                variants=["coherent"],
                progress=messages.append,
            )
            assert sorted(os.listdir(tmpdir)) == ["coherent_seed7.csv", "coherent_seed7.vssl"]
        assert len(messages) == 1
        assert messages[0].startswith("coherence/coherent seed 7:")

    def test_single_seed_has_zero_spread(self):
        (summary,) = run_recipe("coherence", seeds=1, dataset=TINY_DATA, train_cfg=TINY_TRAIN, variants=["coherent"])
        assert summary.seeds == 1
        assert summary.std_acc_biased == 0.0
        assert summary.std_acc_decorrelated == 0.0

    def test_label_ratio_variants(self):
        summaries = run_recipe(
            "label-ratio",
            dataset=replace(TINY_DATA, labeled_per_class=25),
            train_cfg=TINY_TRAIN,
            variants=["supervised@5", "fixmatch@5"],
        )
        assert [s.variant for s in summaries] == ["supervised@5", "fixmatch@5"]

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            run_recipe("temporal", seeds=0)
        with pytest.raises(ConfigurationError, match="no variant"):
            run_recipe("temporal", dataset=TINY_DATA, train_cfg=TINY_TRAIN, variants=["t-flip"])


class TestSummaryCsv:
    """Test the summary CSV."""

    def test_format(self):
        text = dumps_summary([VariantSummary("cutmix", 5, 0.5, 0.125, 0.25, 0.0)])
        lines = text.splitlines()
        assert lines[0] == ",".join(SUMMARY_HEADER)
        assert lines[1] == "cutmix,5,0.500000,0.125000,0.250000,0.000000"


ORDERING_SEEDS = 5
MARGIN = 0.05


def summaries_by_variant(name, variants=None):
    """Recipe summaries at the default dataset and budget, keyed by variant."""
    return {s.variant: s for s in run_recipe(name, seeds=ORDERING_SEEDS, variants=variants)}


@pytest.fixture(scope="module")
def supervised():
    """Supervised baseline shared by the scene-invariance and ssl-gain recipes."""
    return summaries_by_variant("ssl-gain", ["supervised"])["supervised"]


@pytest.mark.slow
class TestRecipeOrderings:
    """Test the directional outcomes of the default recipes over five seeds."""

    def test_coherent_beats_per_frame(self):
        result = summaries_by_variant("coherence")
        assert result["coherent"].mean_acc_decorrelated > result["per-frame"].mean_acc_decorrelated

    def test_actorcutmix_gains_on_decorrelated_split(self, supervised):
        fixmatch = summaries_by_variant("scene-invariance", ["fixmatch-actorcutmix"])["fixmatch-actorcutmix"]
        assert fixmatch.mean_acc_decorrelated >= supervised.mean_acc_decorrelated + MARGIN
        assert abs(fixmatch.mean_acc_biased - supervised.mean_acc_biased) <= MARGIN

    def test_sample_one_not_worse_than_cascaded(self):
        result = summaries_by_variant("intra-cross")
        assert result["sample-one"].mean_acc_decorrelated >= result["cascaded"].mean_acc_decorrelated

    def test_strong_fixmatch_gains_on_decorrelated_split(self, supervised):
        fixmatch = summaries_by_variant("ssl-gain", ["fixmatch-strong"])["fixmatch-strong"]
        assert fixmatch.mean_acc_decorrelated >= supervised.mean_acc_decorrelated + MARGIN
