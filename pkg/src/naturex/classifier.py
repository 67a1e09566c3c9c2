"""Pattern-learning phase: a single-score naturalness classifier.

The network maps a C x H x W image to one logit; :func:`classify` returns the
sigmoid score in (0, 1). After training the model is frozen and used as the
activation-maximization oracle of the pattern enhancer.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import DatasetSplit, InvalidInputError, stack_images, stack_labels, sample_cutmix_box
from .validation import as_tensor, check_images, check_labels

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-7


class FrozenModelError(RuntimeError):
    """Raised when a frozen model would be modified, or an unfrozen one used as oracle."""


@dataclass
class ClassifierConfig:
    input_channels: int = 3
    base_width: int = 16
    depth: int = 4
    max_lr: float = 0.01
    weight_decay: float = 1e-4
    momentum: float = 0.0
    batch_size: int = 32
    epochs: int = 15
    cutmix_probability: float = 0.5
    div_factor: float = 25.0
    final_div: float = 1e4
    seed: int = 0

    def __post_init__(self):
        if self.input_channels < 1:
            raise InvalidInputError("input_channels must be >= 1")
        if self.base_width < 1 or self.depth < 1:
            raise InvalidInputError("base_width and depth must be >= 1")
        if self.max_lr <= 0:
            raise InvalidInputError("max_lr must be positive")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if not 0 <= self.cutmix_probability <= 1:
            raise InvalidInputError("cutmix_probability must lie in [0, 1]")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown classifier config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class ScoreNet(nn.Module):
    """Strided conv stages, global average pooling and a single logit."""

    def __init__(self, input_channels: int = 3, base_width: int = 16, depth: int = 4):
        super().__init__()
        self.input_channels = input_channels
        stages = []
        c_in = input_channels
        for i in range(depth):
            c_out = base_width * 2 ** min(i, 2)
            stages.append(nn.Sequential(
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
                nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ))
            c_in = c_out
        self.features = nn.Sequential(*stages)
        self.head = nn.Linear(c_in, 1)
        self.frozen = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.input_channels:
            raise InvalidInputError(
                f"expected N x {self.input_channels} x H x W input, got {tuple(x.shape)}"
            )
        h = self.features(x)
        return self.head(h.mean(dim=(2, 3))).squeeze(1)

    def score(self, x: torch.Tensor) -> torch.Tensor:
        """Differentiable sigmoid score for a batch."""
        return torch.sigmoid(self(x))

    @property
    def last_conv_stage(self) -> nn.Module:
        return self.features[-1]

    def freeze(self) -> "ScoreNet":
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self

    def train(self, mode: bool = True):
        if mode and getattr(self, "frozen", False):
            raise FrozenModelError("cannot switch a frozen classifier to training mode")
        return super().train(mode)


def build_classifier(config: ClassifierConfig | None = None, seed: int | None = None) -> ScoreNet:
    config = config or ClassifierConfig()
    seed = config.seed if seed is None else seed
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = ScoreNet(config.input_channels, config.base_width, config.depth)
    finally:
        torch.random.set_rng_state(gen_state)
    return model


def classify(model: ScoreNet, image) -> float | np.ndarray:
    """Score one C x H x W image (returns a float) or a batch (returns an array)."""
    single = np.ndim(image) == 3
    X = check_images(image, channels=model.input_channels)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        s = model.score(as_tensor(X, next(model.parameters()).dtype)).double().numpy()
    s = np.clip(s, SCORE_EPS, 1 - SCORE_EPS)
    if was_training:
        model.train()
    return float(s[0]) if single else s


def parameter_checksum(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def onecycle_lr(step: int, total_steps: int, max_lr: float, div_factor: float = 25.0,
                final_div: float = 1e4, pct_warmup: float = 0.3) -> float:
    """Linear warm-up over the first 30% of steps, cosine anneal afterwards."""
    if not 0 <= step <= total_steps:
        raise InvalidInputError(f"step {step} outside [0, {total_steps}]")
    start, end = max_lr / div_factor, max_lr / final_div
    if total_steps == 0:
        return start
    warm = pct_warmup * total_steps
    if step <= warm:
        return start + (max_lr - start) * step / warm
    t = (step - warm) / (total_steps - warm)
    return end + (max_lr - end) * 0.5 * (1 + math.cos(math.pi * t))


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    test_accuracy: float | None = None
    lr_trace: list[float] = field(default_factory=list)
    fractional_label_batches: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_accuracy(model: ScoreNet, samples, threshold: float = 0.5) -> float:
    """Fraction of pure-label samples with ``(score >= threshold) == label``."""
    if len(samples) == 0:
        raise InvalidInputError("no samples to evaluate")
    if any(s.label not in (0.0, 1.0) for s in samples):
        raise InvalidInputError("accuracy is undefined for fractional labels")
    scores = _batched_scores(model, stack_images(samples))
    return float(np.mean((scores >= threshold) == (stack_labels(samples) == 1.0)))


def _batched_scores(model, X, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([np.atleast_1d(classify(model, X[i:i + batch_size]))
                           for i in range(0, len(X), batch_size)])


def _bce_on(model, X, y) -> float:
    s = _batched_scores(model, X)
    s = np.clip(s, SCORE_EPS, 1 - SCORE_EPS)
    return float(np.mean(-(y * np.log(s) + (1 - y) * np.log(1 - s))))


def fit_scores(model: ScoreNet, X: np.ndarray, y: np.ndarray, config: ClassifierConfig,
               X_val: np.ndarray | None = None, y_val: np.ndarray | None = None) -> TrainReport:
    """SGD with weight decay on BCE against soft labels, one-cycle lr, batch CutMix."""
    if getattr(model, "frozen", False):
        raise FrozenModelError("cannot train a frozen classifier")
    report = TrainReport()
    n = len(X)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = steps_per_epoch * config.epochs
    if total == 0:
        return report
    rng = np.random.default_rng(config.seed)
    opt = torch.optim.SGD(model.parameters(), lr=config.max_lr, momentum=config.momentum,
                          weight_decay=config.weight_decay)
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            xb, yb = X[idx].copy(), y[idx].copy()
            if len(idx) > 1 and rng.random() < config.cutmix_probability:
                xb, yb = _cutmix_batch(xb, yb, rng)
            if np.any((yb > 0) & (yb < 1)):
                report.fractional_label_batches += 1
            lr = onecycle_lr(step, total, config.max_lr, config.div_factor, config.final_div)
            for group in opt.param_groups:
                group["lr"] = lr
            report.lr_trace.append(lr)
            logits = model(torch.from_numpy(xb))
            loss = F.binary_cross_entropy_with_logits(logits, torch.from_numpy(yb))
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
        pure = (y == 0) | (y == 1)
        train_scores = _batched_scores(model, X[pure])
        report.train_loss.append(_bce_on(model, X, y))
        report.train_accuracy.append(float(np.mean((train_scores >= 0.5) == (y[pure] == 1))))
        if X_val is not None and len(X_val):
            report.val_loss.append(_bce_on(model, X_val, y_val))
            report.val_accuracy.append(float(np.mean((_batched_scores(model, X_val) >= 0.5) == (y_val == 1))))
        logger.info("classifier epoch %d/%d: train loss %.4f, val acc %s", epoch + 1, config.epochs,
                    report.train_loss[-1], report.val_accuracy[-1] if report.val_accuracy else "n/a")
    return report


def _cutmix_batch(xb: np.ndarray, yb: np.ndarray, rng: np.random.Generator):
    """Paste one box from a shuffled partner into every image of the batch."""
    _, _, H, W = xb.shape
    y0, x0, h, w = sample_cutmix_box(rng, H, W)
    partner = rng.permutation(len(xb))
    xb[:, :, y0:y0 + h, x0:x0 + w] = xb[partner][:, :, y0:y0 + h, x0:x0 + w]
    rho = h * w / (H * W)
    return xb, ((1 - rho) * yb + rho * yb[partner]).astype(np.float32)


def train_classifier(model: ScoreNet, split: DatasetSplit, config: ClassifierConfig) -> TrainReport:
    if not split.train or not split.validation:
        raise InvalidInputError("train_classifier needs nonempty train and validation sets")
    X, y = stack_images(split.train), stack_labels(split.train)
    Xv, yv = stack_images(split.validation), stack_labels(split.validation)
    report = fit_scores(model, X, y, config, Xv, yv)
    if split.test and config.epochs > 0:
        report.test_accuracy = evaluate_accuracy(model, split.test)
    return report


class NaturalnessClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :class:`ScoreNet`.

    ``fit(X, y)`` takes N x C x H x W images in [0, 1] and labels in [0, 1]
    (fractional labels allowed). ``predict_proba`` returns ``[1 - s, s]``.
    """

    def __init__(self, base_width=16, depth=4, max_lr=0.01, weight_decay=1e-4, momentum=0.0,
                 batch_size=32, epochs=15, cutmix_probability=0.5, random_state=0):
        self.base_width = base_width
        self.depth = depth
        self.max_lr = max_lr
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.cutmix_probability = cutmix_probability
        self.random_state = random_state

    def _config(self, channels: int) -> ClassifierConfig:
        return ClassifierConfig(
            input_channels=channels, base_width=self.base_width, depth=self.depth,
            max_lr=self.max_lr, weight_decay=self.weight_decay, momentum=self.momentum,
            batch_size=self.batch_size, epochs=self.epochs,
            cutmix_probability=self.cutmix_probability, seed=self.random_state,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_images(X)
        y = check_labels(y, len(X))
        config = self._config(X.shape[1])
        self.model_ = build_classifier(config)
        if X_val is not None:
            X_val = check_images(X_val, channels=X.shape[1])
            y_val = check_labels(y_val, len(X_val))
        self.report_ = fit_scores(self.model_, X, y, config, X_val, y_val)
        self.model_.freeze()
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    @classmethod
    def from_model(cls, model: ScoreNet, **params) -> "NaturalnessClassifier":
        est = cls(**params)
        est.model_ = model if model.frozen else model.freeze()
        est.classes_ = np.array([0, 1])
        return est

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_images(X, channels=self.model_.input_channels)
        return _batched_scores(self.model_, X)

    def predict_proba(self, X) -> np.ndarray:
        s = self.score_samples(X)
        return np.column_stack([1 - s, s])

    def predict(self, X) -> np.ndarray:
        return (self.score_samples(X) >= 0.5).astype(int)
