"""Pattern-enhancement phase: the activation-maximizing cycle GAN."""

from .config import GanTrainConfig
from .estimator import PatternEnhancer
from .losses import (LossBreakdown, adv_gen_loss, am_loss, bce_loss, cyc_loss, discriminator_loss,
                     generator_loss, sim_loss)
from .networks import (MAXIMIZER, MINIMIZER, CycleGanPair, PatchDiscriminator, ResnetGenerator,
                       build_pair, receptive_field)
from .train import GanTrace, generate_pair, pair_from_config, pretrain_cyclegan, reconstruction_error, train_cyclegan

__all__ = [
    "GanTrainConfig", "PatternEnhancer", "LossBreakdown", "adv_gen_loss", "am_loss", "bce_loss", "cyc_loss",
    "discriminator_loss", "generator_loss", "sim_loss", "MAXIMIZER", "MINIMIZER", "CycleGanPair",
    "PatchDiscriminator", "ResnetGenerator", "build_pair", "receptive_field", "GanTrace",
    "generate_pair", "pair_from_config", "pretrain_cyclegan", "reconstruction_error", "train_cyclegan",
]
