"""Generator and discriminator objectives of the pattern enhancer.

All losses return 0-d tensors so they can be backpropagated; call
``float()`` for the value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..classifier import FrozenModelError
from ..data import InvalidInputError
from .config import GanTrainConfig
from .networks import MAXIMIZER, MINIMIZER

BCE_EPS = 1e-7


def _t(v) -> torch.Tensor:
    return v if isinstance(v, torch.Tensor) else torch.as_tensor(v, dtype=torch.float64)


def bce_loss(h, h_hat) -> torch.Tensor:
    """Mean of ``-[h log h_hat + (1 - h) log(1 - h_hat)]``, h_hat clamped to [1e-7, 1 - 1e-7]."""
    h_hat = _t(h_hat)
    h = _t(h).to(h_hat.dtype)
    h_hat = h_hat.clamp(BCE_EPS, 1 - BCE_EPS)
    return -(h * torch.log(h_hat) + (1 - h) * torch.log1p(-h_hat)).mean()


def sim_loss(x: torch.Tensor, x_hat: torch.Tensor, norm: str = "l1") -> torch.Tensor:
    if x.shape != x_hat.shape:
        raise InvalidInputError(f"sim_loss shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    diff = x - x_hat
    if norm == "l1":
        return diff.abs().mean()
    if norm == "l2":
        return diff.pow(2).mean()
    raise InvalidInputError(f"unknown norm {norm!r}")


def _cycle(x, rec_forward, rec_backward=None, norm="l1"):
    if rec_backward is None:
        return sim_loss(x, rec_forward, norm)
    return 0.5 * (sim_loss(x, rec_forward, norm) + sim_loss(x, rec_backward, norm))


def cyc_loss(w_minus, w_plus, x: torch.Tensor, mode: str = "symmetric", norm: str = "l1") -> torch.Tensor:
    """Reconstruction error of ``w_plus(w_minus(x))``; ``mode="symmetric"``
    also averages in the mirrored ``w_minus(w_plus(x))``."""
    forward = w_plus(w_minus(x))
    if forward.shape != x.shape:
        raise InvalidInputError(f"cycle output shape {tuple(forward.shape)} != input {tuple(x.shape)}")
    backward = w_minus(w_plus(x)) if mode == "symmetric" else None
    return _cycle(x, forward, backward, norm)


def _adv_from_scores(patch_scores: torch.Tensor, mode: str = "lsgan") -> torch.Tensor:
    if mode == "lsgan":
        return (patch_scores - 1).pow(2).mean()
    return bce_loss(torch.ones_like(patch_scores), patch_scores)


def adv_gen_loss(d, w, x: torch.Tensor, mode: str = "lsgan") -> torch.Tensor:
    """Least-squares ``mean((d(w(x)) - 1)^2)`` over the patch grid (``mode="bce"`` for BCE)."""
    return _adv_from_scores(d(w(x)), mode)


def _check_frozen(classifier) -> None:
    if not getattr(classifier, "frozen", False):
        raise FrozenModelError("activation maximization needs a frozen classifier")


def _am_from_images(y, classifier, images: torch.Tensor) -> torch.Tensor:
    _check_frozen(classifier)
    logits = classifier(images)
    target = torch.full_like(logits, float(y))
    # logit-space BCE: same value as bce_loss on the sigmoid score, finite gradients at saturation
    return F.binary_cross_entropy_with_logits(logits, target)


def am_loss(y: int, classifier, w, x: torch.Tensor) -> torch.Tensor:
    """BCE between target ``y`` (1 maximizer, 0 minimizer) and the frozen classifier's score of ``w(x)``."""
    if y not in (0, 1):
        raise InvalidInputError(f"y must be 0 or 1, got {y}")
    return _am_from_images(y, classifier, w(x))


@dataclass
class LossBreakdown:
    sim: float
    cyc: float
    adv: float
    am: float
    total: float
    polarity: str
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 0.3)
    graph: torch.Tensor | None = field(default=None, repr=False, compare=False)

    def recompose(self) -> float:
        w_sim, w_cyc, w_adv, lam = self.weights
        return self.sim * w_sim + self.cyc * w_cyc + self.adv * w_adv + self.am * lam

    def as_dict(self) -> dict:
        return {"polarity": self.polarity, "sim": self.sim, "cyc": self.cyc,
                "adv": self.adv, "am": self.am, "total": self.total}


def _f(t) -> float:
    return float(t.detach()) if isinstance(t, torch.Tensor) else float(t)


def compose_generator_loss(x, y, fake, cycle, d_self, classifier, config: GanTrainConfig,
                           lambda_am: float | None = None) -> LossBreakdown:
    """Combine precomputed generator output ``fake`` and cycle term into the full objective."""
    lam = config.lambda_am if lambda_am is None else lambda_am
    sim = sim_loss(x, fake, config.sim_norm)
    adv = _adv_from_scores(d_self(fake), config.adv_mode)
    if lam > 0:
        am = _am_from_images(y, classifier, fake)
    else:
        am = torch.zeros((), dtype=x.dtype)
    total = config.w_sim * sim + config.w_cyc * cycle + config.w_adv * adv + lam * am
    return LossBreakdown(
        sim=_f(sim), cyc=_f(cycle), adv=_f(adv), am=_f(am), total=_f(total),
        polarity=MAXIMIZER if y == 1 else MINIMIZER,
        weights=(config.w_sim, config.w_cyc, config.w_adv, lam), graph=total,
    )


def _check_polarity(y, w_self, w_other, d_self):
    want = MAXIMIZER if y == 1 else MINIMIZER
    other = MINIMIZER if y == 1 else MAXIMIZER
    if (getattr(w_self, "polarity", want) != want or getattr(d_self, "polarity", want) != want
            or getattr(w_other, "polarity", other) != other):
        raise InvalidInputError(
            f"polarity mismatch: y={y} needs w_self/d_self={want!r} and w_other={other!r}"
        )


def generator_loss(x, y, w_self, w_other, d_self, classifier, config: GanTrainConfig | None = None,
                   lambda_am: float | None = None) -> LossBreakdown:
    """Full generator objective of one sub-GAN.

    Maximizer: ``y=1, w_self=w_plus, w_other=w_minus, d_self=d_plus``;
    the minimizer swaps the roles and uses ``y=0``. The cycle term maps
    through ``w_other`` then ``w_self`` (plus the mirrored order in
    symmetric mode). ``lambda_am`` overrides ``config.lambda_am``.
    """
    config = config or GanTrainConfig()
    if y not in (0, 1):
        raise InvalidInputError(f"y must be 0 or 1, got {y}")
    _check_polarity(y, w_self, w_other, d_self)
    fake = w_self(x)
    if fake.shape != x.shape:
        raise InvalidInputError(f"generator output shape {tuple(fake.shape)} != input {tuple(x.shape)}")
    forward = w_self(w_other(x))
    backward = w_other(fake) if config.cycle_mode == "symmetric" else None
    cycle = _cycle(x, forward, backward, config.sim_norm)
    return compose_generator_loss(x, y, fake, cycle, d_self, classifier, config, lambda_am)


def discriminator_loss(d, real_batch: torch.Tensor, fake_batch: torch.Tensor) -> torch.Tensor:
    """``bce(1, d(real)) + bce(0, d(fake))``, each averaged over the patch grid."""
    real = d(real_batch)
    fake = d(fake_batch.detach())
    return bce_loss(torch.ones_like(real), real) + bce_loss(torch.zeros_like(fake), fake)
