"""Pre-training and activation-maximization training of the generator pair."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..classifier import FrozenModelError, parameter_checksum
from ..data import InvalidInputError, SceneSample, stack_images
from ..validation import as_tensor, check_images
from .config import GanTrainConfig
from .losses import _cycle, compose_generator_loss, discriminator_loss, sim_loss
from .networks import CycleGanPair, build_pair

logger = logging.getLogger(__name__)


@dataclass
class GanTrace:
    """Per-step loss breakdowns of one training phase."""

    phase: str
    steps: list[dict] = field(default_factory=list)
    reconstruction: dict | None = None
    classifier_checksum: str | None = None

    def epoch_means(self) -> list[dict]:
        out = {}
        for s in self.steps:
            out.setdefault(s["epoch"], []).append(s)
        return [
            {"epoch": e,
             "max_total": float(np.mean([s["max"]["total"] for s in rows])),
             "min_total": float(np.mean([s["min"]["total"] for s in rows])),
             "d_loss": float(np.mean([s["d_loss"] for s in rows]))}
            for e, rows in sorted(out.items())
        ]

    def to_dict(self) -> dict:
        return {"phase": self.phase, "steps": self.steps, "reconstruction": self.reconstruction,
                "classifier_checksum": self.classifier_checksum}


def pair_from_config(config: GanTrainConfig, channels: int = 3, seed: int | None = None) -> CycleGanPair:
    """Build an untrained pair with the architecture fields of ``config``."""
    return build_pair(channels, config.ngf, config.n_res, config.ndf, config.disc_layers,
                      seed=config.seed if seed is None else seed, upsample=config.upsample,
                      input_skip=config.input_skip)


def _as_images(dataset, channels: int) -> np.ndarray:
    if len(dataset) == 0:
        raise InvalidInputError("GAN training needs a nonempty dataset")
    if isinstance(dataset, (list, tuple)) and isinstance(dataset[0], SceneSample):
        return stack_images(dataset)
    return check_images(dataset, channels=channels)


def _dtype(pair) -> torch.dtype:
    return next(pair.parameters()).dtype


def _set_requires_grad(modules, flag: bool):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def _train_step(pair: CycleGanPair, xb, classifier, config, lam, opt_g, opt_d):
    w_plus, w_minus = pair.generators()
    d_plus, d_minus = pair.discriminators()
    _set_requires_grad((d_plus, d_minus), False)
    fake_plus = w_plus(xb)
    fake_minus = w_minus(xb)
    rec_plus = w_plus(fake_minus)    # w+(w-(x))
    rec_minus = w_minus(fake_plus)   # w-(w+(x))
    if config.cycle_mode == "symmetric":
        cyc_max = cyc_min = _cycle(xb, rec_plus, rec_minus, config.sim_norm)
    else:
        cyc_max = _cycle(xb, rec_plus, None, config.sim_norm)
        cyc_min = _cycle(xb, rec_minus, None, config.sim_norm)
    b_max = compose_generator_loss(xb, 1, fake_plus, cyc_max, d_plus, classifier, config, lam)
    b_min = compose_generator_loss(xb, 0, fake_minus, cyc_min, d_minus, classifier, config, lam)
    opt_g.zero_grad()
    (b_max.graph + b_min.graph).backward()
    opt_g.step()

    _set_requires_grad((d_plus, d_minus), True)
    opt_d.zero_grad()
    d_loss = discriminator_loss(d_plus, xb, fake_plus) + discriminator_loss(d_minus, xb, fake_minus)
    d_loss.backward()
    opt_d.step()
    return b_max, b_min, float(d_loss.detach())


def _run_phase(pair, images, classifier, config: GanTrainConfig, lam: float, epochs: int,
               phase: str, seed_offset: int, on_epoch=None) -> GanTrace:
    trace = GanTrace(phase)
    if epochs == 0:
        return trace
    g_params = [p for g in pair.generators() for p in g.parameters()]
    d_params = [p for d in pair.discriminators() for p in d.parameters()]
    betas = (config.beta1, config.beta2)
    opt_g = torch.optim.Adam(g_params, lr=config.lr, betas=betas)
    opt_d = torch.optim.Adam(d_params, lr=config.lr, betas=betas)
    rng = np.random.default_rng([config.seed, seed_offset])
    dtype = _dtype(pair)
    n = len(images)
    total = epochs * math.ceil(n / config.batch_size)
    step = 0
    pair.train()
    for epoch in range(epochs):
        order = rng.permutation(n)
        for b in range(0, n, config.batch_size):
            if config.lr_decay == "linear":
                for opt in (opt_g, opt_d):
                    for group in opt.param_groups:
                        group["lr"] = config.lr * (1 - step / total)
            step += 1
            xb = as_tensor(images[order[b:b + config.batch_size]], dtype)
            b_max, b_min, d_loss = _train_step(pair, xb, classifier, config, lam, opt_g, opt_d)
            row = {"epoch": epoch, "max": b_max.as_dict(), "min": b_min.as_dict(), "d_loss": d_loss}
            if not all(np.isfinite(v) for v in (b_max.total, b_min.total, d_loss)):
                raise FloatingPointError(f"non-finite loss in {phase} epoch {epoch}: {row}")
            trace.steps.append(row)
        means = trace.epoch_means()[-1]
        logger.info("%s epoch %d/%d: max %.4f min %.4f d %.4f", phase, epoch + 1, epochs,
                    means["max_total"], means["min_total"], means["d_loss"])
        if on_epoch is not None:
            pair.eval()
            on_epoch(epoch, pair)
            pair.train()
    pair.eval()
    return trace


def reconstruction_error(pair: CycleGanPair, images, batch_size: int = 64) -> dict:
    """Mean ``sim_loss(x, w(x))`` of both generators over ``images``."""
    images = _as_images(images, pair.channels)
    x_max, x_min = generate_pair(pair, images, batch_size)
    x = torch.from_numpy(images)
    return {"w_plus": float(sim_loss(x, torch.from_numpy(x_max))),
            "w_minus": float(sim_loss(x, torch.from_numpy(x_min)))}


def _subset(images, config):
    if config.train_subset is not None and config.train_subset < len(images):
        rng = np.random.default_rng([config.seed, 7])
        return images[np.sort(rng.choice(len(images), config.train_subset, replace=False))]
    return images


def pretrain_cyclegan(pair: CycleGanPair, dataset, config: GanTrainConfig, val_images=None,
                      classifier=None):
    """Train generators and discriminators without the activation-maximization term.

    Returns ``(pair, trace)``; ``trace.reconstruction`` holds the mean
    reconstruction error on ``val_images`` (or the training images).
    """
    images = _subset(_as_images(dataset, pair.channels), config)
    trace = _run_phase(pair, images, classifier, config.for_pretraining(), 0.0, config.pretrain_epochs,
                       "pretrain", 1)
    if config.pretrain_epochs > 0:
        trace.reconstruction = reconstruction_error(pair, images if val_images is None else val_images)
    return pair, trace


def train_cyclegan(pair: CycleGanPair, classifier, dataset, config: GanTrainConfig,
                   pretrained: bool = True, on_epoch=None):
    """Main training with the complete objective; the classifier must be frozen.

    Pass ``pretrained=False`` only to skip pre-training deliberately.
    ``on_epoch(epoch, pair)`` is called after every epoch with the pair in eval mode.
    """
    if not getattr(classifier, "frozen", False):
        raise FrozenModelError("train_cyclegan needs a frozen classifier")
    if not pretrained:
        logger.warning("main GAN training without pre-training")
    images = _subset(_as_images(dataset, pair.channels), config)
    before = parameter_checksum(classifier)
    trace = _run_phase(pair, images, classifier, config, config.lambda_am, config.main_epochs, "main", 2,
                       on_epoch)
    after = parameter_checksum(classifier)
    if before != after:
        raise FrozenModelError("classifier parameters changed during GAN training")
    trace.classifier_checksum = after
    return pair, trace


def generate_pair(pair: CycleGanPair, x, batch_size: int = 64):
    """Return ``(w_plus(x), w_minus(x))`` as float32 arrays shaped like ``x``."""
    single = np.ndim(x) == 3
    X = check_images(x, channels=pair.channels)
    dtype = _dtype(pair)
    pair.eval()
    outs_max, outs_min = [], []
    with torch.no_grad():
        for i in range(0, len(X), batch_size):
            xb = as_tensor(X[i:i + batch_size], dtype)
            outs_max.append(pair.w_plus(xb).float().numpy())
            outs_min.append(pair.w_minus(xb).float().numpy())
    x_max, x_min = np.concatenate(outs_max), np.concatenate(outs_min)
    if single:
        return x_max[0], x_min[0]
    return x_max, x_min
