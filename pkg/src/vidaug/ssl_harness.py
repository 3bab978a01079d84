"""
Semi-supervised training harness for the linear softmax classifier.

Per step the objective is

    L = L_l + lambda_u * L_u
    L_l = -(1/B_l) sum_i  y_i . log f(weak(x_i))
    L_u = -(1/B_u) sum_{j in C} y^_j . log f(strong(u_j))

where C holds the unlabeled clips whose weak-view confidence reaches tau and
y^_j is the argmax one-hot (mixed with the partner's pseudo-label on the
ActorCutMix branch). Logs are clamped at EPS. Pseudo-labels are constants
with respect to the parameters.

Random streams: a step rng hands split(0) to the labeled views, split(1) to
the weak unlabeled views and split(2) to the strong augmentation; clip i of
a view batch uses split(i) of its stream.
"""

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
import yaml

from .aug_policy import (
    AugmentedSample,
    AugPolicy,
    WeakAugConfig,
    apply_policy,
    center_crop,
    mix_targets,
    weak_from_mapping,
    weak_augment,
)
from .classifier import Classifier, feature_dim, feature_matrix, predict_features
from .clip_core import (
    ClipDataset,
    HumanMask,
    RandomSource,
    SeededRng,
    SoftLabel,
    VideoClip,
    write_bytes_atomic,
)
from .errors import ConfigurationError, NumericError, TrainingDivergedError, ValidationError
from .workers import ordered_map

logger = logging.getLogger(__name__)

EPS: float = 1e-12
DEFAULT_TAU: float = 0.95
DEFAULT_LAMBDA_U: float = 1.0
DEFAULT_BATCH_SIZE: int = 5
DEFAULT_LR: float = 0.02
DEFAULT_MOMENTUM: float = 0.9
DEFAULT_WEIGHT_DECAY: float = 1e-4
DEFAULT_EPOCHS: int = 10

METRICS_HEADER: tuple[str, ...] = (
    "epoch",
    "step",
    "L_l",
    "L_u",
    "confident_frac",
    "lr",
    "test_acc_biased",
    "test_acc_decorrelated",
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser, batch and threshold settings of one training run."""

    tau: float = DEFAULT_TAU
    lambda_u: float = DEFAULT_LAMBDA_U
    batch_labeled: int = DEFAULT_BATCH_SIZE
    batch_unlabeled: int = DEFAULT_BATCH_SIZE
    lr: float = DEFAULT_LR
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    steps_per_epoch: int | None = None
    strong_labeled: bool = False
    weak: WeakAugConfig = field(default_factory=WeakAugConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError(f"tau must be in (0, 1], got {self.tau}")
        if not self.lambda_u >= 0.0:
            raise ConfigurationError(f"lambda_u must be >= 0, got {self.lambda_u}")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigurationError("batch sizes must be >= 1")
        if not (self.lr >= 0.0 and 0.0 <= self.momentum < 1.0 and self.weight_decay >= 0.0):
            raise ConfigurationError("lr and weight_decay must be >= 0 and momentum in [0, 1)")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigurationError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")

    def to_mapping(self) -> dict[str, Any]:
        """Plain mapping that `from_mapping` and the YAML loader accept."""
        mapping = asdict(self)
        mapping["weak"] = {
            "flip_prob": self.weak.flip_prob,
            "scale_range": list(self.weak.scale_range),
        }
        if self.weak.crop_size is not None:
            mapping["weak"]["crop_size"] = list(self.weak.crop_size)
        return mapping

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "TrainConfig":
        """Build a config from parsed YAML, rejecting unknown keys."""
        if not isinstance(mapping, Mapping):
            raise ConfigurationError("train config must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError(f"unknown train setting(s) {', '.join(unknown)}")
        values = dict(mapping)
        values["weak"] = weak_from_mapping(values.get("weak"))
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(f"invalid train config: {e}") from e


def load_train_config(path: str | Path) -> TrainConfig:
    """Read a YAML or JSON train-config file."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            document = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path}: cannot parse train config: {e}") from e
    try:
        return TrainConfig.from_mapping(document)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}: {e}") from e


# Losses


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row -sum(t * log(max(p, EPS)))."""
    return -np.sum(targets * np.log(np.maximum(probs, EPS)), axis=-1)


def _one_hot_matrix(indices: Sequence[int], num_classes: int) -> np.ndarray:
    matrix = np.zeros((len(indices), num_classes))
    matrix[np.arange(len(indices)), list(indices)] = 1.0
    return matrix


def _label_matrix(labels: Sequence[SoftLabel], num_classes: int) -> np.ndarray:
    if not labels:
        return np.zeros((0, num_classes))
    return np.stack([label.probs for label in labels])


class PseudoLabelSet(NamedTuple):
    """Argmax pseudo-label and confidence of every clip in an unlabeled batch."""

    classes: tuple[int, ...]
    max_probs: tuple[float, ...]
    confident: tuple[bool, ...]
    num_classes: int

    @property
    def confident_indices(self) -> list[int]:
        """Batch positions whose confidence reaches tau."""
        return [i for i, ok in enumerate(self.confident) if ok]

    def labels(self) -> list[SoftLabel]:
        """Argmax one-hot of every clip, confident or not."""
        return [SoftLabel.one_hot(k, self.num_classes) for k in self.classes]

    def as_list(self) -> list[tuple[int, SoftLabel]]:
        return [(i, SoftLabel.one_hot(self.classes[i], self.num_classes)) for i in self.confident_indices]


def pseudo_labels_from_probs(probs: np.ndarray, tau: float) -> PseudoLabelSet:
    """Argmax classes and the tau mask of an N x K probability matrix."""
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must be in (0, 1], got {tau}")
    num_classes = int(probs.shape[1]) if probs.ndim == 2 else 0
    max_probs = probs.max(axis=1) if len(probs) else np.zeros(0)
    return PseudoLabelSet(
        classes=tuple(int(k) for k in np.argmax(probs, axis=1)) if len(probs) else (),
        max_probs=tuple(float(p) for p in max_probs),
        confident=tuple(bool(p >= tau) for p in max_probs),
        num_classes=num_classes,
    )


def weak_views(clips: Sequence[VideoClip], cfg: WeakAugConfig, rng: RandomSource) -> list[VideoClip]:
    """Weak augmentation of clip i with rng.split(i)."""
    return ordered_map(lambda i: weak_augment(clips[i], cfg, rng.split(i)), list(range(len(clips))))


def labeled_loss(
    model: Classifier,
    batch: Sequence[tuple[VideoClip, SoftLabel]],
    weak_cfg: WeakAugConfig,
    rng: RandomSource,
) -> float:
    """Mean cross-entropy of the weak views of a labeled batch against its labels."""
    if not batch:
        raise ValidationError("labeled batch is empty")
    clips = [clip for clip, _ in batch]
    targets = _label_matrix([label for _, label in batch], model.num_classes)
    probs = predict_features(model, feature_matrix(weak_views(clips, weak_cfg, rng), model.dim))
    return float(np.mean(cross_entropy(probs, targets)))


def pseudo_label_set(
    model: Classifier,
    clips: Sequence[VideoClip],
    tau: float,
    weak_cfg: WeakAugConfig,
    rng: RandomSource,
) -> PseudoLabelSet:
    """Pseudo-labels from the weak views of an unlabeled batch."""
    if not clips:
        return pseudo_labels_from_probs(np.zeros((0, model.num_classes)), tau)
    probs = predict_features(model, feature_matrix(weak_views(clips, weak_cfg, rng), model.dim))
    return pseudo_labels_from_probs(probs, tau)


def confident_pseudo_labels(
    model: Classifier,
    clips: Sequence[VideoClip],
    tau: float,
    weak_cfg: WeakAugConfig,
    rng: RandomSource,
) -> list[tuple[int, SoftLabel]]:
    """(index, argmax one-hot) for every clip whose weak-view confidence is >= tau."""
    return pseudo_label_set(model, clips, tau, weak_cfg, rng).as_list()


def _placeholder_labels(n: int, num_classes: int) -> list[SoftLabel]:
    return [SoftLabel.uniform(num_classes)] * n


def strong_views(
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    num_classes: int,
    policy: AugPolicy,
    rng: RandomSource,
) -> list[AugmentedSample]:
    """Strong views with placeholder labels; targets come later from `mix_targets`."""
    return apply_policy(clips, masks, _placeholder_labels(len(clips), num_classes), policy, rng)


def _unlabeled_terms(
    probs: np.ndarray, pseudo: PseudoLabelSet, samples: Sequence[AugmentedSample], batch_size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row targets and weights of the unlabeled term."""
    if not pseudo.classes:
        return np.zeros_like(probs), np.zeros(len(probs))
    targets = _label_matrix(mix_targets(samples, pseudo.labels()), pseudo.num_classes)
    weights = np.array(pseudo.confident, dtype=np.float64) / batch_size
    return targets, weights


def unlabeled_loss(
    model: Classifier,
    pseudo: PseudoLabelSet,
    clips: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    policy: AugPolicy,
    rng: RandomSource,
    batch_size: int | None = None,
) -> float:
    """Cross-entropy of strong views against confident pseudo-labels, divided by B_u."""
    if not any(pseudo.confident):
        return 0.0
    samples = strong_views(clips, masks, model.num_classes, policy, rng)
    probs = predict_features(model, feature_matrix([s.clip for s in samples], model.dim))
    targets, weights = _unlabeled_terms(probs, pseudo, samples, batch_size or len(clips))
    return float(np.sum(weights * cross_entropy(probs, targets)))


# Step views: every random draw of a step, frozen so loss and gradient agree


@dataclass(frozen=True)
class StepViews:
    """Features and targets of one step's labeled, weak and strong views."""

    labeled_features: np.ndarray
    labeled_targets: np.ndarray
    weak_features: np.ndarray
    strong_features: np.ndarray
    strong_samples: tuple[AugmentedSample, ...]
    batch_unlabeled: int


class LossTerms(NamedTuple):
    """Per-step losses and the number of confident unlabeled clips."""

    labeled: float
    unlabeled: float
    total: float
    confident: int


def build_views(
    model: Classifier,
    labeled: Sequence[tuple[VideoClip, SoftLabel]],
    unlabeled: Sequence[VideoClip],
    unlabeled_masks: Sequence[HumanMask | None] | None,
    cfg: TrainConfig,
    policy: AugPolicy | None,
    rng: RandomSource,
    labeled_masks: Sequence[HumanMask | None] | None = None,
) -> StepViews:
    """Draw all augmentations of one step."""
    if not labeled:
        raise ValidationError("labeled batch is empty")
    k, dim = model.num_classes, model.dim
    clips = [clip for clip, _ in labeled]
    labels = [label for _, label in labeled]
    if cfg.strong_labeled and policy is not None:
        samples = apply_policy(clips, labeled_masks, labels, policy, rng.split(0))
        labeled_features = feature_matrix([s.clip for s in samples], dim)
        labeled_targets = _label_matrix([s.label for s in samples], k)
    else:
        labeled_features = feature_matrix(weak_views(clips, cfg.weak, rng.split(0)), dim)
        labeled_targets = _label_matrix(labels, k)

    if unlabeled and policy is not None:
        weak_features = feature_matrix(weak_views(unlabeled, cfg.weak, rng.split(1)), dim)
        strong = strong_views(unlabeled, unlabeled_masks, k, policy, rng.split(2))
        strong_features = feature_matrix([s.clip for s in strong], dim)
    else:
        weak_features = strong_features = np.zeros((0, dim))
        strong = []
    return StepViews(
        labeled_features,
        labeled_targets,
        weak_features,
        strong_features,
        tuple(strong),
        len(unlabeled),
    )


class ForwardPass(NamedTuple):
    """Probabilities and unlabeled targets shared by the loss and its gradient."""

    probs_l: np.ndarray
    probs_s: np.ndarray
    targets_u: np.ndarray
    weights_u: np.ndarray
    pseudo: PseudoLabelSet


def _forward_views(model: Classifier, views: StepViews, cfg: TrainConfig) -> ForwardPass:
    """Class probabilities of every view plus the pseudo-labels taken from the weak ones."""
    probs_l = predict_features(model, views.labeled_features)
    probs_w = predict_features(model, views.weak_features)
    probs_s = predict_features(model, views.strong_features)
    pseudo = pseudo_labels_from_probs(probs_w, cfg.tau)
    targets_u, weights_u = _unlabeled_terms(
        probs_s, pseudo, views.strong_samples, max(views.batch_unlabeled, 1)
    )
    return ForwardPass(probs_l, probs_s, targets_u, weights_u, pseudo)


def loss_terms(model: Classifier, views: StepViews, cfg: TrainConfig) -> LossTerms:
    """L_l, L_u and their weighted total for frozen step views."""
    return _terms_from_forward(views, cfg, _forward_views(model, views, cfg))


def _terms_from_forward(views: StepViews, cfg: TrainConfig, forward_out: ForwardPass) -> LossTerms:
    probs_l, probs_s, targets_u, weights_u, pseudo = forward_out
    l_l = float(np.mean(cross_entropy(probs_l, views.labeled_targets)))
    l_u = float(np.sum(weights_u * cross_entropy(probs_s, targets_u))) if len(probs_s) else 0.0
    return LossTerms(l_l, l_u, l_l + cfg.lambda_u * l_u, sum(pseudo.confident))


def objective(model: Classifier, views: StepViews, cfg: TrainConfig) -> float:
    """Total loss plus the weight-decay term 0.5 * wd * |theta|^2."""
    penalty = 0.5 * cfg.weight_decay * (np.sum(model.weights**2) + np.sum(model.bias**2))
    return loss_terms(model, views, cfg).total + float(penalty)


def _logit_gradient(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d/dz of -sum(t * log(max(softmax(z), EPS))), row-wise."""
    live = probs > EPS
    g = np.where(live, -targets / np.where(live, probs, 1.0), 0.0)
    return probs * (g - np.sum(probs * g, axis=1, keepdims=True))


def gradient_from_views(
    model: Classifier, views: StepViews, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of `objective` with respect to (W, b)."""
    return _gradient_from_forward(model, views, cfg, _forward_views(model, views, cfg))


def _gradient_from_forward(
    model: Classifier, views: StepViews, cfg: TrainConfig, forward_out: ForwardPass
) -> tuple[np.ndarray, np.ndarray]:
    probs_l, probs_s, targets_u, weights_u, _ = forward_out
    n_l = len(probs_l)
    dz_l = _logit_gradient(probs_l, views.labeled_targets) / n_l
    grad_w = dz_l.T @ views.labeled_features
    grad_b = dz_l.sum(axis=0)
    if len(probs_s) and cfg.lambda_u > 0.0:
        dz_u = _logit_gradient(probs_s, targets_u) * (cfg.lambda_u * weights_u)[:, np.newaxis]
        grad_w = grad_w + dz_u.T @ views.strong_features
        grad_b = grad_b + dz_u.sum(axis=0)
    grad_w = grad_w + cfg.weight_decay * model.weights
    grad_b = grad_b + cfg.weight_decay * model.bias
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NumericError("gradient is not finite")
    return grad_w, grad_b


def loss_and_gradient(
    model: Classifier, views: StepViews, cfg: TrainConfig
) -> tuple[LossTerms, np.ndarray, np.ndarray]:
    """`loss_terms` and `gradient_from_views` from a single forward pass."""
    forward_out = _forward_views(model, views, cfg)
    terms = _terms_from_forward(views, cfg, forward_out)
    if not math.isfinite(terms.total):
        raise NumericError(f"loss is {terms.total}")
    grad_w, grad_b = _gradient_from_forward(model, views, cfg, forward_out)
    return terms, grad_w, grad_b


def total_loss(
    model: Classifier,
    labeled: Sequence[tuple[VideoClip, SoftLabel]],
    unlabeled: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    cfg: TrainConfig,
    policy: AugPolicy | None,
    rng: RandomSource,
) -> float:
    """L_l + lambda_u * L_u, without the weight-decay term."""
    views = build_views(model, labeled, unlabeled, masks, cfg, policy, rng)
    return loss_terms(model, views, cfg).total


def gradient(
    model: Classifier,
    labeled: Sequence[tuple[VideoClip, SoftLabel]],
    unlabeled: Sequence[VideoClip],
    masks: Sequence[HumanMask | None] | None,
    cfg: TrainConfig,
    policy: AugPolicy | None,
    rng: RandomSource,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of total_loss plus weight decay, with the same draws as total_loss."""
    views = build_views(model, labeled, unlabeled, masks, cfg, policy, rng)
    return gradient_from_views(model, views, cfg)


# Optimisation


class CosineSchedule:
    """lr0 * 0.5 * (1 + cos(pi * step / total_steps)), reaching 0 at the end."""

    def __init__(self, initial_lr: float, total_steps: int) -> None:
        self.initial_lr = initial_lr
        self.total_steps = max(total_steps, 1)

    def __call__(self, step: int) -> float:
        return self.initial_lr * 0.5 * (1.0 + math.cos(math.pi * step / self.total_steps))


class SGDMomentum:
    """v <- mu * v + g; theta <- theta - lr * v."""

    def __init__(self, model: Classifier, momentum: float) -> None:
        self.model = model
        self.momentum = momentum
        self.velocity_w = np.zeros_like(model.weights)
        self.velocity_b = np.zeros_like(model.bias)

    def step(self, grad_w: np.ndarray, grad_b: np.ndarray, lr: float) -> None:
        self.velocity_w = self.momentum * self.velocity_w + grad_w
        self.velocity_b = self.momentum * self.velocity_b + grad_b
        self.model.weights = self.model.weights - lr * self.velocity_w
        self.model.bias = self.model.bias - lr * self.velocity_b


class BatchSampler:
    """Endless stream of indices, reshuffled (Fisher-Yates) every pass."""

    def __init__(self, size: int, rng: RandomSource) -> None:
        if size < 1:
            raise ValidationError("cannot sample batches from an empty set")
        self.size = size
        self.rng = rng
        self._order: list[int] = []

    def _shuffle(self) -> list[int]:
        order = list(range(self.size))
        for i in range(self.size - 1, 0, -1):
            j = self.rng.integer(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def next_batch(self, batch_size: int) -> list[int]:
        """Next `batch_size` indices, starting a new pass when the current one runs out."""
        batch = []
        while len(batch) < batch_size:
            if not self._order:
                self._order = self._shuffle()
            batch.append(self._order.pop(0))
        return batch


@dataclass(frozen=True)
class MetricsRow:
    """One epoch of the metrics log."""

    epoch: int
    step: int
    L_l: float
    L_u: float
    confident_frac: float
    lr: float
    test_acc_biased: float | None = None
    test_acc_decorrelated: float | None = None


class TrainResult(NamedTuple):
    """Trained model and one metrics row per epoch."""

    model: Classifier
    metrics: list[MetricsRow]


class EvalSet(NamedTuple):
    """Features of an unaugmented test split, computed once per run."""

    features: np.ndarray
    labels: np.ndarray


def eval_set(test_set: ClipDataset, dim: int, crop_size: tuple[int, int] | None = None) -> EvalSet:
    """Pool the centre-cropped test clips into an `EvalSet`."""
    if len(test_set) == 0:
        raise ValidationError("test set is empty")
    clips = [center_crop(clip, crop_size) for clip in test_set.clips]
    return EvalSet(feature_matrix(clips, dim), np.array(test_set.labels))


def accuracy(model: Classifier, data: EvalSet) -> float:
    """Top-1 accuracy on precomputed features."""
    predictions = np.argmax(predict_features(model, data.features), axis=1)
    return float(np.mean(predictions == data.labels))


def evaluate(model: Classifier, test_set: ClipDataset, crop_size: tuple[int, int] | None = None) -> float:
    """Top-1 accuracy without augmentation (centre crop when `crop_size` differs)."""
    return accuracy(model, eval_set(test_set, model.dim, crop_size))


def default_steps_per_epoch(n_labeled: int, n_unlabeled: int, cfg: TrainConfig, unlabeled_active: bool) -> int:
    """cfg.steps_per_epoch, else one pass over the unlabeled set (or the labeled set without one)."""
    if cfg.steps_per_epoch is not None:
        return cfg.steps_per_epoch
    if unlabeled_active:
        return math.ceil(n_unlabeled / cfg.batch_unlabeled)
    return math.ceil(n_labeled / cfg.batch_labeled)


def train(
    labeled: ClipDataset,
    unlabeled: ClipDataset | None,
    cfg: TrainConfig,
    policy: AugPolicy | None,
    test_sets: Mapping[str, ClipDataset] | None = None,
) -> TrainResult:
    """
    SGD with momentum and a per-step cosine learning rate.

    The unlabeled branch is skipped entirely (no draws) when the unlabeled set
    is empty, lambda_u is 0 or there is no policy; the run then equals
    `train_supervised` with the same config.

    Raises:
        TrainingDivergedError: If a loss or gradient stops being finite
    """
    if len(labeled) == 0:
        raise ValidationError("labeled set is empty")
    first = labeled.clips[0]
    model = Classifier.zeros(labeled.num_classes, feature_dim(first.t, first.c))
    # test clips are never augmented, so their features are pooled once per run
    evals = {
        name: eval_set(test_set, model.dim, cfg.weak.crop_size)
        for name, test_set in (test_sets or {}).items()
        if len(test_set) > 0
    }
    unlabeled_active = (
        unlabeled is not None and len(unlabeled) > 0 and cfg.lambda_u > 0.0 and policy is not None
    )
    n_unlabeled = len(unlabeled) if unlabeled is not None else 0
    steps = default_steps_per_epoch(len(labeled), n_unlabeled, cfg, unlabeled_active)
    schedule = CosineSchedule(cfg.lr, cfg.epochs * steps)
    optimizer = SGDMomentum(model, cfg.momentum)

    root = SeededRng(cfg.seed)
    labeled_sampler = BatchSampler(len(labeled), root.split(1))
    unlabeled_sampler = BatchSampler(n_unlabeled, root.split(2)) if unlabeled_active else None
    step_seeds = root.split(3)
    one_hots = [SoftLabel.one_hot(y, labeled.num_classes) for y in labeled.labels]

    metrics: list[MetricsRow] = []
    global_step = 0
    for epoch in range(1, cfg.epochs + 1):
        sum_l = sum_u = 0.0
        confident = seen = 0
        lr = schedule(global_step)
        for step in range(1, steps + 1):
            idx_l = labeled_sampler.next_batch(cfg.batch_labeled)
            batch_l = [(labeled.samples[i].clip, one_hots[i]) for i in idx_l]
            masks_l = [labeled.samples[i].mask for i in idx_l]
            clips_u: list[VideoClip] = []
            masks_u: list[HumanMask | None] = []
            if unlabeled_sampler is not None and unlabeled is not None:
                idx_u = unlabeled_sampler.next_batch(cfg.batch_unlabeled)
                clips_u = [unlabeled.samples[i].clip for i in idx_u]
                masks_u = [unlabeled.samples[i].mask for i in idx_u]

            views = build_views(
                model,
                batch_l,
                clips_u,
                masks_u,
                cfg,
                policy if (unlabeled_active or cfg.strong_labeled) else None,
                step_seeds.spawn(),
                labeled_masks=masks_l,
            )
            try:
                terms, grad_w, grad_b = loss_and_gradient(model, views, cfg)
            except NumericError as e:
                raise TrainingDivergedError(str(e), epoch, step) from e

            lr = schedule(global_step)
            optimizer.step(grad_w, grad_b, lr)
            global_step += 1
            sum_l += terms.labeled
            sum_u += terms.unlabeled
            confident += terms.confident
            seen += views.batch_unlabeled

        row = MetricsRow(
            epoch=epoch,
            step=global_step,
            L_l=sum_l / steps,
            L_u=sum_u / steps,
            confident_frac=confident / seen if seen else 0.0,
            lr=lr,
            test_acc_biased=_maybe_accuracy(model, evals.get("test_biased")),
            test_acc_decorrelated=_maybe_accuracy(model, evals.get("test_decorrelated")),
        )
        metrics.append(row)
        logger.info(
            "epoch %d/%d: L_l=%.4f L_u=%.4f confident=%.3f lr=%.5f",
            epoch,
            cfg.epochs,
            row.L_l,
            row.L_u,
            row.confident_frac,
            row.lr,
        )
    return TrainResult(model, metrics)


def _maybe_accuracy(model: Classifier, data: EvalSet | None) -> float | None:
    return None if data is None else accuracy(model, data)


def train_supervised(
    labeled: ClipDataset,
    cfg: TrainConfig,
    test_sets: Mapping[str, ClipDataset] | None = None,
    policy: AugPolicy | None = None,
) -> TrainResult:
    """Labeled branch only; `policy` is used only when cfg.strong_labeled is set."""
    return train(labeled, None, cfg, policy if cfg.strong_labeled else None, test_sets)


# Metrics CSV


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_metrics(rows: Sequence[MetricsRow]) -> str:
    """Metrics CSV text; floats are written with repr so they read back exactly."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow([_format_cell(getattr(row, name)) for name in METRICS_HEADER])
    return buffer.getvalue()


def write_metrics(path: str | Path, rows: Sequence[MetricsRow]) -> None:
    """Atomically write `dumps_metrics(rows)` to `path`."""
    write_bytes_atomic(path, dumps_metrics(rows).encode("utf-8"))


def read_metrics(path: str | Path) -> list[MetricsRow]:
    """Parse a metrics CSV written by `write_metrics`."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValidationError(f"{path}: unexpected metrics header {reader.fieldnames}")
        rows = []
        for record in reader:
            rows.append(
                MetricsRow(
                    epoch=int(record["epoch"]),
                    step=int(record["step"]),
                    L_l=float(record["L_l"]),
                    L_u=float(record["L_u"]),
                    confident_frac=float(record["confident_frac"]),
                    lr=float(record["lr"]),
                    test_acc_biased=float(record["test_acc_biased"]) if record["test_acc_biased"] else None,
                    test_acc_decorrelated=(
                        float(record["test_acc_decorrelated"]) if record["test_acc_decorrelated"] else None
                    ),
                )
            )
    return rows
