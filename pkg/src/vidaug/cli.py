#!/usr/bin/env python3
"""
Command-line interface for vidaug.

Subcommands apply augmentation policies to `.vclip` files, rasterize cached
detector boxes, generate the synthetic dataset, train and evaluate the
desk-scale classifier, run ablation recipes and render frame strips.

Exit codes: 0 success, 1 I/O or numeric failure, 2 invalid input or config.
"""

import glob
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import yaml

from .ablation import DEFAULT_TRAIN, RECIPES, get_recipe, run_recipe, write_summary
from .aug_policy import (
    AugPolicy,
    apply_policy,
    load_policy,
    parse_mode,
    policy_to_mapping,
    requires_masks,
)
from .classifier import load_checkpoint, save_checkpoint
from .clip_core import (
    DEFAULT_SCORE_THRESHOLD,
    BoxTrack,
    SeededRng,
    SoftLabel,
    VideoClip,
    foreground_ratio,
    load_clip,
    mask_to_clip,
    rasterize_masks,
    save_clip,
)
from .errors import ConfigurationError, NumericError, ValidationError
from .frame_strip import strip_suffix, write_strip
from .records import (
    SPLIT_NAMES,
    read_box_file,
    read_label_file,
    read_manifest,
    read_split,
    write_dataset,
    write_sidecar,
)
from .ssl_harness import (
    TrainConfig,
    evaluate,
    load_train_config,
    train,
    train_supervised,
    write_metrics,
)
from .synthetic import SyntheticDatasetSpec, generate_synthetic

try:
    import click
except ImportError:
    click = None


SEED_ENV: str = "VIDAUG_SEED"
CLIP_SUFFIX: str = ".vclip"
DEFAULT_SEED: int = 0
DEFAULT_ABLATION_SEEDS: int = 5
LOG_FORMAT: str = "%(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


class ClipPathExpander:
    """Expands comma-separated clip paths: files, directories (trailing separator) and globs."""

    def expand_paths(self, inputs_str: str) -> list[str]:
        """Expand every comma-separated entry in order, skipping empty ones."""
        expanded = []
        for path in (p.strip() for p in inputs_str.split(",")):
            if path:
                expanded.extend(self._expand_single_path(path))
        return expanded

    def _expand_single_path(self, path: str) -> list[str]:
        """Dispatch one entry to the directory, glob or plain-file expander."""
        if path.endswith(os.sep):
            return self._expand_directory(path)
        elif self._is_glob_pattern(path):
            return self._expand_glob(path)
        return self._expand_regular_file(path)

    def _expand_directory(self, dir_path: str) -> list[str]:
        """Clip files directly inside a directory, sorted by name."""
        dir_path = dir_path.rstrip(os.sep)
        if not os.path.isdir(dir_path):
            raise FileNotFoundError(f"Directory not found: {dir_path}")
        return [
            os.path.join(dir_path, name)
            for name in sorted(os.listdir(dir_path))
            if name.endswith(CLIP_SUFFIX) and os.path.isfile(os.path.join(dir_path, name))
        ]

    def _expand_glob(self, pattern: str) -> list[str]:
        """Files matching a glob, sorted; warns on stderr when nothing matches."""
        matches = [m for m in sorted(glob.glob(pattern)) if os.path.isfile(m)]
        if not matches:
            click.echo(f"No files found matching pattern: {pattern}", err=True)
        return matches

    def _expand_regular_file(self, file_path: str) -> list[str]:
        """A single existing file."""
        if not os.path.isfile(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        return [file_path]

    def _is_glob_pattern(self, path: str) -> bool:
        return any(char in path for char in ["*", "?", "["])


@dataclass(frozen=True)
class AugmentConfig:
    inputs: str
    output_dir: str
    policy_path: str | None = None
    mode: str | None = None
    boxes_path: str | None = None
    labels_path: str | None = None
    num_classes: int | None = None
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class RasterizeConfig:
    inputs: str
    boxes_path: str
    output_dir: str
    score_threshold: float = DEFAULT_SCORE_THRESHOLD


@dataclass(frozen=True)
class GenDataConfig:
    output_dir: str
    config_path: str | None = None
    seed: int = DEFAULT_SEED
    overrides: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class TrainCommandConfig:
    data_dir: str
    policy_path: str | None = None
    config_path: str | None = None
    metrics_path: str | None = None
    checkpoint_path: str | None = None
    supervised: bool = False
    strong_labeled: bool = False
    epochs: int | None = None
    seed: int | None = None
    score_threshold: float = DEFAULT_SCORE_THRESHOLD


@dataclass(frozen=True)
class EvalConfig:
    checkpoint_path: str
    data_dir: str
    split: str = "test_decorrelated"


@dataclass(frozen=True)
class AblateConfig:
    recipe: str
    out_csv: str
    seeds: int = DEFAULT_ABLATION_SEEDS
    base_seed: int = DEFAULT_SEED
    epochs: int | None = None
    dataset_config: str | None = None
    train_config: str | None = None
    checkpoint_dir: str | None = None


@dataclass(frozen=True)
class InspectConfig:
    input_path: str
    strip_out: str | None = None


def _check_cli_dependencies() -> None:
    """Check if CLI dependencies are available."""
    if click is None:
        print("Error: CLI functionality requires the 'cli' extra.", file=sys.stderr)
        print("Install with: uv add vidaug[cli]", file=sys.stderr)
        print("Or using pip: pip install vidaug[cli]", file=sys.stderr)
        sys.exit(1)


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def _run_with_exit_codes(action: Callable[[], None]) -> None:
    """Run a subcommand body, mapping library errors to exit codes."""
    try:
        action()
    except (ValidationError, ConfigurationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(2)
    except (OSError, NumericError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


def _read_yaml_mapping(path: str, what: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            document = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path}: cannot parse {what}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path}: {what} must be a mapping")
    return document


# augment


def _load_inputs(inputs: str) -> list[VideoClip]:
    paths = ClipPathExpander().expand_paths(inputs)
    if not paths:
        raise ValidationError(f"no clips found in {inputs!r}")
    return [load_clip(path) for path in paths]


def _batch_labels(config: AugmentConfig, clips: list[VideoClip]) -> tuple[list[SoftLabel], bool]:
    if config.labels_path is None:
        k = config.num_classes or 2
        return [SoftLabel.uniform(k)] * len(clips), False
    labels = read_label_file(config.labels_path)
    missing = [clip.clip_id for clip in clips if clip.clip_id not in labels]
    if missing:
        raise ValidationError(f"{config.labels_path}: no label for clip(s) {', '.join(missing)}")
    k = config.num_classes or max(2, max(labels.values()) + 1)
    return [SoftLabel.one_hot(labels[clip.clip_id], k) for clip in clips], True


def _augment_main(config: AugmentConfig) -> None:
    """Augment a batch of clips and write `.vclip` outputs plus JSON sidecars."""
    policy = load_policy(config.policy_path) if config.policy_path else AugPolicy()
    if config.mode:
        policy = policy.with_mode(parse_mode(config.mode))
    if requires_masks(policy.mode) and config.boxes_path is None:
        raise ValidationError(
            f"policy mode {policy.mode.value} can take a cross-clip branch; --boxes is required"
        )

    clips = _load_inputs(config.inputs)
    masks = None
    if config.boxes_path is not None:
        tracks = read_box_file(config.boxes_path)
        masks = [
            rasterize_masks(
                tracks.get(clip.clip_id, BoxTrack(clip.clip_id)),
                clip.t,
                clip.h,
                clip.w,
                config.score_threshold,
            )
            for clip in clips
        ]
    labels, have_labels = _batch_labels(config, clips)
    logger.debug("policy: %s", policy_to_mapping(policy))

    samples = apply_policy(clips, masks, labels, policy, SeededRng(config.seed))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for source, sample in zip(clips, samples):
        save_clip(sample.clip, out_dir / f"{source.clip_id}{CLIP_SUFFIX}")
        sidecar = {
            "clip_id": source.clip_id,
            "mode": policy.mode.value,
            "branch": sample.branch,
            "lambda": sample.lam,
            "partner_id": clips[sample.partner].clip_id if sample.partner >= 0 else None,
            "seed": config.seed,
        }
        if have_labels:
            sidecar["smoothed_label"] = [float(p) for p in sample.label.probs]
        write_sidecar(out_dir / f"{source.clip_id}.json", sidecar)
    logger.info("augmented %d clip(s) into %s", len(samples), out_dir)


# rasterize


def _rasterize_main(config: RasterizeConfig) -> None:
    tracks = read_box_file(config.boxes_path)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for clip in _load_inputs(config.inputs):
        track = tracks.get(clip.clip_id, BoxTrack(clip.clip_id))
        mask = rasterize_masks(track, clip.t, clip.h, clip.w, config.score_threshold)
        mask_id = f"{clip.clip_id}_mask"
        save_clip(mask_to_clip(mask, mask_id), out_dir / f"{mask_id}{CLIP_SUFFIX}")
        print(f"{clip.clip_id}\t{foreground_ratio(mask):.6f}")


# gen-data


def _gen_data_main(config: GenDataConfig) -> None:
    settings = _read_yaml_mapping(config.config_path, "dataset config") if config.config_path else {}
    settings.update(dict(config.overrides))
    settings["seed"] = config.seed
    spec = SyntheticDatasetSpec.from_mapping(settings)
    splits = generate_synthetic(spec)
    write_dataset(config.output_dir, splits._asdict(), spec.to_mapping())
    for name in SPLIT_NAMES:
        print(f"{name}\t{len(getattr(splits, name))}")


# train


def _train_config(config: TrainCommandConfig) -> TrainConfig:
    cfg = load_train_config(config.config_path) if config.config_path else TrainConfig()
    if config.epochs is not None:
        cfg = replace(cfg, epochs=config.epochs)
    if config.seed is not None:
        cfg = replace(cfg, seed=config.seed)
    if config.strong_labeled:
        cfg = replace(cfg, strong_labeled=True)
    return cfg


def _train_main(config: TrainCommandConfig) -> None:
    cfg = _train_config(config)
    policy = load_policy(config.policy_path) if config.policy_path else AugPolicy()
    root = Path(config.data_dir)
    read_manifest(root)
    labeled = read_split(root, "labeled", config.score_threshold)
    tests = {
        name: read_split(root, name, config.score_threshold)
        for name in ("test_biased", "test_decorrelated")
        if (root / name).is_dir()
    }
    if config.supervised:
        result = train_supervised(labeled, cfg, tests, policy)
    else:
        unlabeled = (
            read_split(root, "unlabeled", config.score_threshold)
            if (root / "unlabeled").is_dir()
            else None
        )
        result = train(labeled, unlabeled, cfg, policy, tests)

    if config.metrics_path:
        write_metrics(config.metrics_path, result.metrics)
    if config.checkpoint_path:
        save_checkpoint(result.model, config.checkpoint_path)
    final = result.metrics[-1]
    print(f"epochs\t{final.epoch}")
    print(f"L_l\t{final.L_l:.6f}")
    print(f"L_u\t{final.L_u:.6f}")
    for name in ("test_acc_biased", "test_acc_decorrelated"):
        value = getattr(final, name)
        if value is not None:
            print(f"{name}\t{value:.6f}")


# eval


def _eval_main(config: EvalConfig) -> None:
    model = load_checkpoint(config.checkpoint_path)
    dataset = read_split(config.data_dir, config.split)
    print(f"accuracy\t{evaluate(model, dataset):.6f}")


# ablate


def _ablate_main(config: AblateConfig) -> None:
    recipe = get_recipe(config.recipe)
    dataset = SyntheticDatasetSpec()
    if config.dataset_config:
        dataset = SyntheticDatasetSpec.from_mapping(
            _read_yaml_mapping(config.dataset_config, "dataset config")
        )
    train_cfg = load_train_config(config.train_config) if config.train_config else DEFAULT_TRAIN
    if config.epochs is not None:
        train_cfg = replace(train_cfg, epochs=config.epochs)

    summaries = run_recipe(
        recipe.name,
        seeds=config.seeds,
        base_seed=config.base_seed,
        dataset=dataset,
        train_cfg=train_cfg,
        output_dir=config.checkpoint_dir,
        progress=lambda message: click.echo(message, err=True) if click else None,
    )
    write_summary(config.out_csv, summaries)
    for s in summaries:
        print(
            f"{s.variant}\tbiased {s.mean_acc_biased:.4f}±{s.std_acc_biased:.4f}"
            f"\tdecorrelated {s.mean_acc_decorrelated:.4f}±{s.std_acc_decorrelated:.4f}"
        )


# inspect


def _inspect_main(config: InspectConfig) -> None:
    clip = load_clip(config.input_path)
    strip_out = config.strip_out or str(Path(config.input_path).with_suffix(strip_suffix(clip)))
    write_strip(clip, strip_out)
    frames = clip.frames
    print(
        f"{clip.clip_id}\tshape {'x'.join(map(str, clip.shape))}"
        f"\tmin {int(frames.min())}\tmax {int(frames.max())}\tmean {float(frames.mean()):.3f}"
    )


def build_cli():
    """Assemble the click command group."""
    _check_cli_dependencies()

    @click.group()
    @click.option("--verbose", "-v", count=True, help="Log INFO (-v) or DEBUG (-vv) to stderr")
    @click.version_option(package_name="vidaug")
    def cli_main(verbose):
        """Temporally coherent video clip augmentation and desk-scale semi-supervised training."""
        _configure_logging(verbose)

    seed_option = click.option(
        "--seed",
        type=int,
        default=DEFAULT_SEED,
        envvar=SEED_ENV,
        show_default=True,
        help=f"Base random seed (env {SEED_ENV})",
    )
    threshold_option = click.option(
        "--score-threshold",
        type=float,
        default=DEFAULT_SCORE_THRESHOLD,
        show_default=True,
        help="Minimum detector score for a box to enter the human mask",
    )

    @cli_main.command("augment")
    @click.option("--in", "inputs", required=True, help="Comma-delimited .vclip files, directories (ending in a separator) or globs")
    @click.option("--out", "output_dir", required=True, help="Output directory for augmented clips and sidecars")
    @click.option("--policy", "policy_path", type=str, help="Policy file (YAML or JSON); default is the strong policy")
    @click.option("--mode", type=str, help="Override the policy's mode")
    @click.option("--boxes", "boxes_path", type=str, help="Box file (JSON lines) for human masks")
    @click.option("--labels", "labels_path", type=str, help="Label CSV (clip_id,class_index) for mixed labels")
    @click.option("--num-classes", type=int, help="Number of classes for --labels")
    @threshold_option
    @seed_option
    def augment_cmd(inputs, output_dir, policy_path, mode, boxes_path, labels_path, num_classes, score_threshold, seed):
        """Apply an augmentation policy to a batch of clips."""
        config = AugmentConfig(
            inputs=inputs,
            output_dir=output_dir,
            policy_path=policy_path,
            mode=mode,
            boxes_path=boxes_path,
            labels_path=labels_path,
            num_classes=num_classes,
            score_threshold=score_threshold,
            seed=seed,
        )
        _run_with_exit_codes(lambda: _augment_main(config))

    @cli_main.command("rasterize")
    @click.option("--in", "inputs", required=True, help="Comma-delimited .vclip files, directories or globs")
    @click.option("--boxes", "boxes_path", required=True, help="Box file (JSON lines)")
    @click.option("--out", "output_dir", required=True, help="Output directory for mask clips")
    @threshold_option
    def rasterize_cmd(inputs, boxes_path, output_dir, score_threshold):
        """Rasterize cached detector boxes into 0/255 mask clips."""
        config = RasterizeConfig(inputs, boxes_path, output_dir, score_threshold)
        _run_with_exit_codes(lambda: _rasterize_main(config))

    @cli_main.command("gen-data")
    @click.option("--out", "output_dir", required=True, help="Dataset directory to create")
    @click.option("--config", "config_path", type=str, help="YAML dataset settings")
    @click.option("--num-classes", type=int, help="Number of classes")
    @click.option("--labeled-per-class", type=int, help="Labeled clips per class")
    @click.option("--unlabeled-per-class", type=int, help="Unlabeled clips per class")
    @click.option("--test-per-class", type=int, help="Clips per class in each test split")
    @click.option("--scene-bias", type=float, help="Probability a training background matches its class")
    @seed_option
    def gen_data_cmd(output_dir, config_path, num_classes, labeled_per_class, unlabeled_per_class, test_per_class, scene_bias, seed):
        """Generate the synthetic scene-biased dataset."""
        overrides = {
            "num_classes": num_classes,
            "labeled_per_class": labeled_per_class,
            "unlabeled_per_class": unlabeled_per_class,
            "test_per_class": test_per_class,
            "scene_bias": scene_bias,
        }
        config = GenDataConfig(
            output_dir=output_dir,
            config_path=config_path,
            seed=seed,
            overrides=tuple((k, v) for k, v in overrides.items() if v is not None),
        )
        _run_with_exit_codes(lambda: _gen_data_main(config))

    @cli_main.command("train")
    @click.option("--data", "data_dir", required=True, help="Dataset directory written by gen-data")
    @click.option("--policy", "policy_path", type=str, help="Strong augmentation policy file")
    @click.option("--config", "config_path", type=str, help="YAML train settings")
    @click.option("--metrics-out", "metrics_path", type=str, help="Metrics CSV to write")
    @click.option("--checkpoint", "checkpoint_path", type=str, help="Checkpoint file to write")
    @click.option("--supervised", is_flag=True, help="Train the supervised baseline (no unlabeled branch)")
    @click.option("--strong-labeled", is_flag=True, help="Also strongly augment the labeled branch")
    @click.option("--epochs", type=int, help="Override the number of epochs")
    @click.option("--seed", type=int, envvar=SEED_ENV, help=f"Override the training seed (env {SEED_ENV})")
    @threshold_option
    def train_cmd(data_dir, policy_path, config_path, metrics_path, checkpoint_path, supervised, strong_labeled, epochs, seed, score_threshold):
        """Train the classifier with the semi-supervised objective."""
        config = TrainCommandConfig(
            data_dir=data_dir,
            policy_path=policy_path,
            config_path=config_path,
            metrics_path=metrics_path,
            checkpoint_path=checkpoint_path,
            supervised=supervised,
            strong_labeled=strong_labeled,
            epochs=epochs,
            seed=seed,
            score_threshold=score_threshold,
        )
        _run_with_exit_codes(lambda: _train_main(config))

    @cli_main.command("eval")
    @click.option("--checkpoint", "checkpoint_path", required=True, help="Checkpoint file")
    @click.option("--data", "data_dir", required=True, help="Dataset directory")
    @click.option("--split", type=click.Choice(list(SPLIT_NAMES)), default="test_decorrelated", show_default=True)
    def eval_cmd(checkpoint_path, data_dir, split):
        """Print the top-1 accuracy of a checkpoint on a split."""
        config = EvalConfig(checkpoint_path, data_dir, split)
        _run_with_exit_codes(lambda: _eval_main(config))

    @cli_main.command("ablate")
    @click.option("--recipe", required=True, help=f"One of: {', '.join(RECIPES)}")
    @click.option("--out-csv", required=True, help="Summary CSV to write")
    @click.option("--seeds", type=int, default=DEFAULT_ABLATION_SEEDS, show_default=True, help="Number of seeds")
    @click.option("--seed", "base_seed", type=int, default=DEFAULT_SEED, envvar=SEED_ENV, show_default=True, help="First seed")
    @click.option("--epochs", type=int, help="Override the recipe's epoch count")
    @click.option("--dataset-config", type=str, help="YAML dataset settings replacing the recipe default")
    @click.option("--train-config", type=str, help="YAML train settings replacing the recipe default")
    @click.option("--checkpoint-dir", type=str, help="Directory for per-run checkpoints and metrics")
    def ablate_cmd(recipe, out_csv, seeds, base_seed, epochs, dataset_config, train_config, checkpoint_dir):
        """Run a desk-scale ablation recipe and write mean and std accuracy per variant."""
        config = AblateConfig(
            recipe=recipe,
            out_csv=out_csv,
            seeds=seeds,
            base_seed=base_seed,
            epochs=epochs,
            dataset_config=dataset_config,
            train_config=train_config,
            checkpoint_dir=checkpoint_dir,
        )
        _run_with_exit_codes(lambda: _ablate_main(config))

    @cli_main.command("inspect")
    @click.option("--in", "input_path", required=True, help="Clip to inspect")
    @click.option(
        "--strip-out",
        default=None,
        help="Frame strip to write (PGM for 1 channel, PPM for 3); defaults to the input path with that suffix",
    )
    def inspect_cmd(input_path, strip_out):
        """Write a horizontal frame strip of a clip."""
        config = InspectConfig(input_path, strip_out)
        _run_with_exit_codes(lambda: _inspect_main(config))

    return cli_main


def vidaug():
    """CLI entry point."""
    build_cli()()


if __name__ == "__main__":
    vidaug()
