from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from ..data import InvalidInputError
from .networks import SKIP_MODES

ADV_MODES = ("lsgan", "bce")
SIM_NORMS = ("l1", "l2")
CYCLE_MODES = ("symmetric", "single")
LR_DECAYS = ("none", "linear")


@dataclass
class GanTrainConfig:
    """Training and architecture settings of the pattern enhancer.

    ``lambda_am`` weights the activation-maximization term; ``w_sim``,
    ``w_cyc`` and ``w_adv`` weight the remaining generator terms.
    ``pretrain_recon_weight`` multiplies ``w_sim`` and ``w_cyc`` during
    pre-training only. ``lr_decay="linear"`` lowers the learning rate of the
    main phase linearly to zero over its steps. ``train_subset`` caps the number of training images
    (``None`` = all).
    """

    lambda_am: float = 0.3
    w_sim: float = 1.0
    w_cyc: float = 1.0
    w_adv: float = 1.0
    beta1: float = 0.5
    beta2: float = 0.999
    lr: float = 2e-4
    lr_decay: str = "none"
    pretrain_epochs: int = 10
    main_epochs: int = 10
    batch_size: int = 8
    pretrain_recon_weight: float = 1.0
    adv_mode: str = "lsgan"
    sim_norm: str = "l1"
    cycle_mode: str = "symmetric"
    ngf: int = 16
    n_res: int = 12
    ndf: int = 16
    disc_layers: int = 3
    upsample: str = "resize"
    input_skip: str = "none"
    train_subset: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lambda_am < 0:
            raise InvalidInputError("lambda_am must be >= 0")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must lie in [0, 1)")
        if min(self.w_sim, self.w_cyc, self.w_adv) < 0:
            raise InvalidInputError("loss term weights must be >= 0")
        if self.pretrain_recon_weight <= 0:
            raise InvalidInputError("pretrain_recon_weight must be positive")
        if self.lr <= 0:
            raise InvalidInputError("lr must be positive")
        if self.lr_decay not in LR_DECAYS:
            raise InvalidInputError(f"lr_decay must be one of {LR_DECAYS}")
        if self.pretrain_epochs < 0 or self.main_epochs < 0:
            raise InvalidInputError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.adv_mode not in ADV_MODES:
            raise InvalidInputError(f"adv_mode must be one of {ADV_MODES}")
        if self.sim_norm not in SIM_NORMS:
            raise InvalidInputError(f"sim_norm must be one of {SIM_NORMS}")
        if self.cycle_mode not in CYCLE_MODES:
            raise InvalidInputError(f"cycle_mode must be one of {CYCLE_MODES}")
        if self.upsample not in ("resize", "transpose"):
            raise InvalidInputError("upsample must be 'resize' or 'transpose'")
        if self.input_skip not in SKIP_MODES:
            raise InvalidInputError(f"input_skip must be one of {SKIP_MODES}")
        if self.n_res < 1 or self.ngf < 1 or self.ndf < 1 or self.disc_layers < 1:
            raise InvalidInputError("architecture sizes must be >= 1")
        if self.train_subset is not None and self.train_subset < 1:
            raise InvalidInputError("train_subset must be positive or null")

    @classmethod
    def from_dict(cls, d: dict) -> "GanTrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown gan config keys: {sorted(unknown)}")
        return cls(**d)

    def for_pretraining(self) -> "GanTrainConfig":
        k = self.pretrain_recon_weight
        return replace(self, w_sim=self.w_sim * k, w_cyc=self.w_cyc * k, lambda_am=0.0, lr_decay="none")

    def to_dict(self) -> dict:
        return asdict(self)
