"""Run configuration: one YAML file covering every phase, plus per-phase seeds.

Top-level keys (all optional)::

    seed: 0                 # global seed; phase seeds are derived from it
    out: runs/default       # run directory
    synth: {...}            # SynthConfig fields except seed
    split: {ratios: [0.7, 0.15, 0.15]}
    classifier: {...}       # ClassifierConfig fields except seed
    gan: {...}              # GanTrainConfig fields except seed
    attribution: {mode: pair-diff, generator: min, save_overlays: 8}
    occlusion: {patch_size: 16, stride: 8, fill_value: 0.0}
    evaluation: {percentile: 80.0, classes: [1, 2], max_images: null}

Unknown keys anywhere raise :class:`ConfigError`. A phase seed is the first
four bytes (big endian) of ``sha256(f"{seed}:{phase}")``.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .attribution import MODES, PAIR_DIFF
from .baselines import OcclusionConfig
from .classifier import ClassifierConfig
from .data import MASK_CLASSES, InvalidInputError, SynthConfig
from .ganx import GanTrainConfig

PHASES = ("synth", "split", "classifier", "gan")

# CPU-sized enhancer settings; GanTrainConfig's own defaults are the full-size architecture
DESK_GAN = dict(n_res=3, lr=1e-3, batch_size=8, pretrain_epochs=10, main_epochs=10,
                pretrain_recon_weight=10.0, train_subset=400, input_skip="maximizer")


class ConfigError(InvalidInputError):
    """Invalid or unknown configuration."""


def phase_seed(seed: int, phase: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{phase}".encode()).digest()[:4], "big")


def _check_keys(section: str, d, allowed) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return dict(d)


def _fields(cls) -> set:
    return {f.name for f in fields(cls)} - {"seed"}


@dataclass
class AttributionSettings:
    mode: str = PAIR_DIFF
    generator: str = "min"
    save_overlays: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"attribution.mode must be one of {MODES}")
        if self.generator not in ("min", "max"):
            raise ConfigError("attribution.generator must be 'min' or 'max'")
        if self.save_overlays < 0:
            raise ConfigError("attribution.save_overlays must be >= 0")


@dataclass
class EvaluationSettings:
    percentile: float = 80.0
    classes: tuple[int, ...] = (1, 2)
    max_images: int | None = None

    def __post_init__(self):
        self.classes = tuple(int(c) for c in self.classes)
        if not 0 < self.percentile < 100:
            raise ConfigError("evaluation.percentile must lie in (0, 100)")
        if not self.classes or set(self.classes) - set(MASK_CLASSES):
            raise ConfigError(f"evaluation.classes must be a nonempty subset of {sorted(MASK_CLASSES)}")
        if self.max_images is not None and self.max_images < 1:
            raise ConfigError("evaluation.max_images must be positive or null")


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    synth: SynthConfig = field(default_factory=SynthConfig)
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    gan: GanTrainConfig = field(default_factory=lambda: GanTrainConfig(**DESK_GAN))
    attribution: AttributionSettings = field(default_factory=AttributionSettings)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        if len(self.split_ratios) != 3 or min(self.split_ratios) <= 0 or abs(sum(self.split_ratios) - 1) > 1e-9:
            raise ConfigError("split.ratios must be three positive numbers summing to 1")
        # phase seeds always follow the global seed
        self.synth = replace(self.synth, seed=self.seed_for("synth"))
        self.classifier = replace(self.classifier, seed=self.seed_for("classifier"))
        self.gan = replace(self.gan, seed=self.seed_for("gan"))

    def seed_for(self, phase: str) -> int:
        if phase not in PHASES:
            raise ConfigError(f"unknown phase {phase!r}")
        return phase_seed(self.seed, phase)

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "RunConfig":
        d = self.to_dict()
        if seed is not None:
            d["seed"] = seed
        if out is not None:
            d["out"] = str(out)
        return RunConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = _check_keys("top level", d, ("seed", "out", "synth", "split", "classifier", "gan",
                                         "attribution", "occlusion", "evaluation"))
        synth = _check_keys("synth", d.get("synth"), _fields(SynthConfig))
        split = _check_keys("split", d.get("split"), ("ratios",))
        clf = _check_keys("classifier", d.get("classifier"), _fields(ClassifierConfig))
        gan = _check_keys("gan", d.get("gan"), _fields(GanTrainConfig))
        attr = _check_keys("attribution", d.get("attribution"), _fields(AttributionSettings))
        occ = _check_keys("occlusion", d.get("occlusion"), _fields(OcclusionConfig))
        ev = _check_keys("evaluation", d.get("evaluation"), _fields(EvaluationSettings))
        for key, value in list(synth.items()):
            if isinstance(value, list):
                synth[key] = tuple(value)
        try:
            return cls(
                seed=d.get("seed", 0),
                out=str(d.get("out", "runs/default")),
                synth=SynthConfig(**synth),
                split_ratios=tuple(split.get("ratios", (0.7, 0.15, 0.15))),
                classifier=ClassifierConfig(**clf),
                gan=GanTrainConfig(**{**DESK_GAN, **gan}),
                attribution=AttributionSettings(**attr),
                occlusion=OcclusionConfig(**occ),
                evaluation=EvaluationSettings(**ev),
            )
        except ConfigError:
            raise
        except (InvalidInputError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        return cls.from_dict(data or {})

    def to_dict(self) -> dict:
        def strip(d):
            d = dict(d)
            d.pop("seed", None)
            return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

        return {
            "seed": self.seed,
            "out": self.out,
            "synth": strip(self.synth.to_dict()),
            "split": {"ratios": list(self.split_ratios)},
            "classifier": strip(self.classifier.to_dict()),
            "gan": strip(self.gan.to_dict()),
            "attribution": asdict(self.attribution),
            "occlusion": strip(asdict(self.occlusion)),
            "evaluation": strip(asdict(self.evaluation)),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)
