"""
Desk-scale ablation recipes.

Each recipe fixes a synthetic dataset and a training budget, then trains a
handful of variants over N seeds and reports the mean and population
standard deviation of the final test accuracies on both test splits. Seed s
(0-based) uses data and training seed `base_seed + s`, and every variant of
a seed shares the same generated dataset.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .actor_cutmix import MixConfig
from .aug_policy import AugMode, AugPolicy, WeakAugConfig
from .classifier import save_checkpoint
from .clip_core import write_bytes_atomic
from .errors import ConfigurationError
from .photo_geo_aug import ALL_KINDS, PhotoGeoKind
from .ssl_harness import TrainConfig, train, train_supervised, write_metrics
from .synthetic import SyntheticDatasetSpec, SyntheticSplits, generate_synthetic
from .temporal_aug import ALL_TEMPORAL_KINDS, TemporalKind

logger = logging.getLogger(__name__)

SUMMARY_HEADER: tuple[str, ...] = (
    "variant",
    "seeds",
    "mean_acc_biased",
    "std_acc_biased",
    "mean_acc_decorrelated",
    "std_acc_decorrelated",
)
DEFAULT_RECIPE_EPOCHS: int = 4
DEFAULT_DATASET = SyntheticDatasetSpec()
# Mirroring a synthetic clip changes its class; recipe weak views do not flip.
DEFAULT_WEAK = WeakAugConfig(flip_prob=0.0)
DEFAULT_TRAIN = TrainConfig(epochs=DEFAULT_RECIPE_EPOCHS, weak=DEFAULT_WEAK)

_NO_TEMPORAL = (TemporalKind.IDENTITY,)
_NO_PHOTO_GEO = (PhotoGeoKind.IDENTITY,)


@dataclass(frozen=True)
class Variant:
    """
    One trained configuration; `policy=None` means the supervised baseline.

    With `labeled_per_class` the variant trains on the first that many labeled
    clips per class, so smaller labeled sets are nested in larger ones.
    """

    name: str
    policy: AugPolicy | None
    labeled_per_class: int | None = None


@dataclass(frozen=True)
class Recipe:
    """Named group of variants trained on the same data and budget."""

    name: str
    description: str
    variants: tuple[Variant, ...]


class VariantSummary(NamedTuple):
    """Mean and population std of one variant's final accuracies across seeds."""

    variant: str
    seeds: int
    mean_acc_biased: float
    std_acc_biased: float
    mean_acc_decorrelated: float
    std_acc_decorrelated: float


def _intra(mode: AugMode, temporal=ALL_TEMPORAL_KINDS, photo_geo=ALL_KINDS) -> AugPolicy:
    """Policy with restricted op pools; cross-clip settings stay at their defaults."""
    return AugPolicy(mode=mode, photo_geo_pool=tuple(photo_geo), temporal_pool=tuple(temporal))


def _cross(mode: AugMode, smoothing: bool = True) -> AugPolicy:
    """Cross-clip-only policy with label smoothing on or off."""
    return AugPolicy(mode=mode, cross_cfg=MixConfig(smoothing=smoothing))


def _build_recipes() -> dict[str, Recipe]:
    recipes = [
        Recipe(
            "coherence",
            "per-frame vs temporally coherent photometric/geometric augmentation",
            (
                Variant("per-frame", _intra(AugMode.PER_FRAME, temporal=_NO_TEMPORAL)),
                Variant("coherent", _intra(AugMode.INTRA_CASCADED, temporal=_NO_TEMPORAL)),
            ),
        ),
        Recipe(
            "temporal",
            "temporal ops alone and combined",
            (
                Variant("none", _intra(AugMode.INTRA_CASCADED, _NO_TEMPORAL, _NO_PHOTO_GEO)),
                Variant("t-half", _intra(AugMode.INTRA_CASCADED, (TemporalKind.T_HALF,), _NO_PHOTO_GEO)),
                Variant("t-drop", _intra(AugMode.INTRA_CASCADED, (TemporalKind.T_DROP,), _NO_PHOTO_GEO)),
                Variant(
                    "t-reverse", _intra(AugMode.INTRA_CASCADED, (TemporalKind.T_REVERSE,), _NO_PHOTO_GEO)
                ),
                Variant("all", _intra(AugMode.INTRA_CASCADED, ALL_TEMPORAL_KINDS, _NO_PHOTO_GEO)),
            ),
        ),
        Recipe(
            "actorcutmix",
            "CutMix, Background-CutMix and ActorCutMix with and without label smoothing",
            (
                Variant("cutmix", _cross(AugMode.CUTMIX_ONLY)),
                Variant("background-cutmix", _cross(AugMode.BACKGROUND_CUTMIX_ONLY)),
                Variant("actorcutmix-no-smoothing", _cross(AugMode.CROSS_ONLY, smoothing=False)),
                Variant("actorcutmix", _cross(AugMode.CROSS_ONLY)),
            ),
        ),
        Recipe(
            "intra-combine",
            "sample one of photometric/geometric or temporal vs cascading both",
            (
                Variant("sample-one", _intra(AugMode.INTRA_SAMPLE_ONE)),
                Variant("cascaded", _intra(AugMode.INTRA_CASCADED)),
            ),
        ),
        Recipe(
            "intra-cross",
            "cascading intra- and cross-clip augmentation vs sampling one per batch",
            (
                Variant("cascaded", _intra(AugMode.CASCADED_INTRA_CROSS)),
                Variant("sample-one", _intra(AugMode.STRONG_ALG1)),
            ),
        ),
        Recipe(
            "scene-invariance",
            "supervised baseline vs FixMatch with ActorCutMix only",
            (
                Variant("supervised", None),
                Variant("fixmatch-actorcutmix", _cross(AugMode.CROSS_ONLY)),
            ),
        ),
        Recipe(
            "ssl-gain",
            "supervised baseline vs FixMatch with the full strong augmentation",
            (
                Variant("supervised", None),
                Variant("fixmatch-strong", _intra(AugMode.STRONG_ALG1)),
            ),
        ),
        Recipe(
            "label-ratio",
            "supervised vs FixMatch at several labeled fractions",
            tuple(
                Variant(f"{kind}@{per_class}", policy, labeled_per_class=per_class)
                for per_class in (5, 10, 25)
                for kind, policy in (("supervised", None), ("fixmatch", _intra(AugMode.STRONG_ALG1)))
            ),
        ),
    ]
    return {recipe.name: recipe for recipe in recipes}


RECIPES: dict[str, Recipe] = _build_recipes()


def get_recipe(name: str) -> Recipe:
    """Look up a recipe by name, ignoring case and surrounding blanks."""
    try:
        return RECIPES[name.strip().lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown recipe {name!r}; valid recipes: {', '.join(RECIPES)}"
        ) from None


def recipe_train_config(base: TrainConfig, dataset: SyntheticDatasetSpec, seed: int) -> TrainConfig:
    """Shared step budget: every variant runs ceil(N_u / B_u) steps per epoch."""
    steps = base.steps_per_epoch
    if steps is None:
        n_unlabeled = dataset.unlabeled_per_class * dataset.num_classes
        if n_unlabeled:
            steps = math.ceil(n_unlabeled / base.batch_unlabeled)
    return replace(base, seed=seed, steps_per_epoch=steps)


def _population_stats(values: list[float]) -> tuple[float, float]:
    array = np.array(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


def labeled_subset(splits: SyntheticSplits, variant: Variant) -> SyntheticSplits:
    """Splits with the labeled set cut to the variant's per-class count."""
    if variant.labeled_per_class is None:
        return splits
    count = variant.labeled_per_class * splits.labeled.num_classes
    # labels cycle 0..K-1, so any prefix of whole rounds is class-balanced
    return splits._replace(labeled=splits.labeled.subset(range(count)))


def run_variant(
    variant: Variant,
    splits: SyntheticSplits,
    cfg: TrainConfig,
    output_dir: Path | None = None,
    tag: str = "",
) -> tuple[float, float]:
    """Train one variant and return its final (biased, decorrelated) accuracy."""
    tests = {"test_biased": splits.test_biased, "test_decorrelated": splits.test_decorrelated}
    if variant.policy is None:
        result = train_supervised(splits.labeled, cfg, tests)
    else:
        result = train(splits.labeled, splits.unlabeled, cfg, variant.policy, tests)
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.model, output_dir / f"{variant.name}{tag}.vssl")
        write_metrics(output_dir / f"{variant.name}{tag}.csv", result.metrics)
    final = result.metrics[-1]
    return final.test_acc_biased or 0.0, final.test_acc_decorrelated or 0.0


def run_recipe(
    name: str,
    seeds: int = 1,
    base_seed: int = 0,
    dataset: SyntheticDatasetSpec = DEFAULT_DATASET,
    train_cfg: TrainConfig = DEFAULT_TRAIN,
    output_dir: str | Path | None = None,
    variants: Iterable[str] | None = None,
    progress: Callable[[str], None] | None = None,
) -> list[VariantSummary]:
    """
    Run a recipe over `seeds` seeds.

    Args:
        name: Recipe name from RECIPES
        seeds: Number of seeds (>= 1)
        base_seed: Seed of the first run
        dataset: Dataset spec shared by every variant of a seed
        train_cfg: Training config; its seed and step budget are replaced per run
        output_dir: Where to write per-run checkpoints and metrics, if anywhere
        variants: Restrict the run to these variant names
        progress: Called with a short message as each run finishes

    Returns:
        One summary per variant, in recipe order
    """
    if seeds < 1:
        raise ConfigurationError(f"seeds must be >= 1, got {seeds}")
    recipe = get_recipe(name)
    selected = list(recipe.variants)
    if variants is not None:
        wanted = set(variants)
        unknown = wanted - {v.name for v in recipe.variants}
        if unknown:
            raise ConfigurationError(f"recipe {recipe.name} has no variant(s) {', '.join(sorted(unknown))}")
        selected = [v for v in selected if v.name in wanted]
    out = Path(output_dir) if output_dir is not None else None

    for variant in selected:
        if variant.labeled_per_class is not None and variant.labeled_per_class > dataset.labeled_per_class:
            raise ConfigurationError(
                f"variant {variant.name} needs {variant.labeled_per_class} labeled clips per class, "
                f"the dataset has labeled_per_class={dataset.labeled_per_class}"
            )

    results: dict[str, list[tuple[float, float]]] = {v.name: [] for v in selected}
    for index in range(seeds):
        seed = base_seed + index
        spec = replace(dataset, seed=seed)
        splits = generate_synthetic(spec)
        cfg = recipe_train_config(train_cfg, spec, seed)
        for variant in selected:
            accuracy = run_variant(variant, labeled_subset(splits, variant), cfg, out, f"_seed{seed}")
            results[variant.name].append(accuracy)
            message = (
                f"{recipe.name}/{variant.name} seed {seed}: "
                f"biased={accuracy[0]:.4f} decorrelated={accuracy[1]:.4f}"
            )
            logger.info(message)
            if progress is not None:
                progress(message)

    summaries = []
    for variant in selected:
        biased, decorrelated = zip(*results[variant.name])
        mean_b, std_b = _population_stats(list(biased))
        mean_d, std_d = _population_stats(list(decorrelated))
        summaries.append(VariantSummary(variant.name, seeds, mean_b, std_b, mean_d, std_d))
    return summaries


def dumps_summary(summaries: Iterable[VariantSummary]) -> str:
    """Summary CSV text, accuracies to six decimals."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for s in summaries:
        writer.writerow(
            [s.variant, s.seeds]
            + [f"{value:.6f}" for value in (s.mean_acc_biased, s.std_acc_biased, s.mean_acc_decorrelated, s.std_acc_decorrelated)]
        )
    return buffer.getvalue()


def write_summary(path: str | Path, summaries: Iterable[VariantSummary]) -> None:
    write_bytes_atomic(path, dumps_summary(summaries).encode("utf-8"))
