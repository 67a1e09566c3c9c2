"""End-to-end run: synth -> classifier -> gan -> attribute -> evaluate -> report.

Every phase writes into one run directory::

    <out>/config.yaml           resolved configuration
    <out>/data/                 dataset + manifest
    <out>/classifier/           classifier checkpoint
    <out>/gan/                  generator/discriminator checkpoint
    <out>/maps/<method>/        attribution rasters with JSON sidecars
    <out>/overlays/             PNG overlays of the first few maps
    <out>/report.csv, report.txt
    <out>/run_manifest.json     config, seeds and the sha256 of every artifact
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .attribution import PAIR_DIFF, attribution_from_pair, attribution_vs_input, overlay, save_map, save_png
from .baselines import gradcam, occlusion_map
from .checkpoint import checkpoint_hash, load_classifier, load_pair, save_classifier, save_pair
from .classifier import build_classifier, train_classifier
from .config import RunConfig
from .data import (DatasetSplit, InvalidInputError, generate_dataset, load_dataset, manifest_hash, save_dataset,
                   split_dataset, stack_images)
from .evalio import EvalResult, evaluate_maps, report_table
from .ganx import generate_pair, pair_from_config, pretrain_cyclegan, train_cyclegan

logger = logging.getLogger(__name__)

OURS_PAIR = "ours-pair-diff"
OURS_INPUT = "ours-input-diff"
METHODS = (OURS_PAIR, OURS_INPUT, "gradcam", "occlusion")


class PhaseError(RuntimeError):
    """A pipeline phase failed; the message names the phase."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"phase {phase!r} failed: {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class RunState:
    config: RunConfig
    out: Path
    split: DatasetSplit | None = None
    classifier: torch.nn.Module | None = None
    pair: object = None
    maps: dict = field(default_factory=dict)
    eval_samples: list = field(default_factory=list)
    results: list[EvalResult] = field(default_factory=list)
    timings: dict = field(default_factory=dict)


@contextmanager
def deterministic_torch():
    """Deterministic kernels for the duration of a run; restores the previous setting."""
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


@contextmanager
def _phase(state: RunState, name: str):
    t0 = time.perf_counter()
    logger.info("phase %s: start", name)
    try:
        yield
    except PhaseError:
        raise
    except InvalidInputError:
        raise
    except Exception as e:
        raise PhaseError(name, e) from e
    state.timings[name] = round(time.perf_counter() - t0, 3)
    logger.info("phase %s: done in %.1f s", name, state.timings[name])


def run_synth(state: RunState) -> DatasetSplit:
    cfg = state.config
    with _phase(state, "synth"):
        samples = generate_dataset(cfg.synth)
        state.split = split_dataset(samples, cfg.split_ratios, seed=cfg.seed_for("split"))
        save_dataset(state.split, state.out / "data", cfg.synth, cfg.seed,
                     extra={"split_ratios": list(cfg.split_ratios), "split_seed": cfg.seed_for("split")})
    return state.split


def run_classifier(state: RunState, resume_from=None):
    """Train and checkpoint the classifier, or load it from ``resume_from``."""
    cfg = state.config
    data_hash = manifest_hash(state.out / "data")
    with _phase(state, "classifier"):
        if resume_from is not None:
            model, manifest = load_classifier(resume_from)
            if manifest.get("data_manifest_hash") not in (None, data_hash):
                raise InvalidInputError(f"classifier checkpoint {resume_from} was trained on a different dataset")
            logger.info("resumed classifier from %s", resume_from)
            target = state.out / "classifier"
            if Path(resume_from).resolve() != target.resolve():
                save_classifier(model, cfg.classifier, target, seed=cfg.seed, data_hash=data_hash,
                                report=manifest.get("report"))
        else:
            model = build_classifier(cfg.classifier)
            report = train_classifier(model, state.split, cfg.classifier)
            model.freeze()
            save_classifier(model, cfg.classifier, state.out / "classifier", seed=cfg.seed,
                            data_hash=data_hash, report=report.to_dict())
    state.classifier = model
    return model


def run_gan(state: RunState, skip_pretrain: bool = False):
    cfg = state.config
    gcfg = cfg.gan
    with _phase(state, "gan"):
        X = stack_images(state.split.train)
        X_val = stack_images(state.split.validation)
        pair = pair_from_config(gcfg, X.shape[1])
        traces = {}
        if not skip_pretrain:
            t0 = time.perf_counter()
            pair, pre = pretrain_cyclegan(pair, X, gcfg, val_images=X_val)
            traces["pretrain"] = {"epochs": pre.epoch_means(), "reconstruction": pre.reconstruction,
                                  "seconds": round(time.perf_counter() - t0, 3)}
        t0 = time.perf_counter()
        pair, main = train_cyclegan(pair, state.classifier, X, gcfg, pretrained=not skip_pretrain)
        traces["main"] = {"epochs": main.epoch_means(), "final": main.steps[-1] if main.steps else None,
                          "classifier_checksum": main.classifier_checksum,
                          "seconds": round(time.perf_counter() - t0, 3)}
        save_pair(pair, gcfg, state.out / "gan", seed=cfg.seed,
                  classifier_hash=checkpoint_hash(state.out / "classifier"), traces=traces)
    state.pair = pair
    return pair


def evaluation_samples(split: DatasetSplit, max_images: int | None = None) -> list:
    """Natural-class test samples: the ones whose reference mask can be nonempty."""
    samples = [s for s in split.test if s.label == 1.0]
    return samples[:max_images] if max_images else samples


def compute_maps(classifier, pair, samples, config: RunConfig) -> dict:
    """Attribution maps of every method for ``samples``, keyed by method name."""
    X = stack_images(samples)
    x_max, x_min = generate_pair(pair, X)
    other = x_min if config.attribution.generator == "min" else x_max
    maps = {
        OURS_PAIR: [attribution_from_pair(a, b) for a, b in zip(x_max, x_min)],
        OURS_INPUT: [attribution_vs_input(x, o) for x, o in zip(X, other)],
        "gradcam": [gradcam(classifier, x) for x in X],
        "occlusion": [occlusion_map(classifier, x, config.occlusion) for x in X],
    }
    return maps


def write_maps(maps: dict, samples, out: Path, percentile: float, n_overlays: int = 0, mode: str = PAIR_DIFF):
    for method, method_maps in maps.items():
        for s, m in zip(samples, method_maps):
            save_map(m, out / "maps" / method / s.sample_id, percentile, sample_id=s.sample_id, method=method)
    ours = maps[OURS_PAIR if mode == PAIR_DIFF else OURS_INPUT]
    for s, m in list(zip(samples, ours))[:n_overlays]:
        save_png(overlay(s.image, m), out / "overlays" / f"{s.sample_id}.png")


def run_attribute(state: RunState):
    cfg = state.config
    with _phase(state, "attribute"):
        samples = evaluation_samples(state.split, cfg.evaluation.max_images)
        if not samples:
            raise InvalidInputError("the test split has no natural-class samples to attribute")
        state.maps = compute_maps(state.classifier, state.pair, samples, cfg)
        state.eval_samples = samples
        write_maps(state.maps, samples, state.out, cfg.evaluation.percentile, cfg.attribution.save_overlays,
                   cfg.attribution.mode)
    return state.maps


def ordered_methods(mode: str) -> list[str]:
    """Report order: the configured attribution mode first, baselines last."""
    first, second = (OURS_PAIR, OURS_INPUT) if mode == PAIR_DIFF else (OURS_INPUT, OURS_PAIR)
    return [first, second, "gradcam", "occlusion"]


def run_evaluate(state: RunState) -> list[EvalResult]:
    cfg = state.config
    with _phase(state, "evaluate"):
        state.results = [
            evaluate_maps(m, state.maps[m], state.eval_samples, cfg.evaluation.classes, cfg.evaluation.percentile)
            for m in ordered_methods(cfg.attribution.mode)
        ]
    return state.results


def run_report(state: RunState) -> tuple[str, str]:
    with _phase(state, "report"):
        text, csv_text = report_table(state.results, published_row=True)
        (state.out / "report.csv").write_text(csv_text)
        (state.out / "report.txt").write_text(text)
    return text, csv_text


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run_manifest(state: RunState) -> Path:
    cfg = state.config
    artifacts = {str(p.relative_to(state.out)): _sha256(p)
                 for p in sorted(state.out.rglob("*")) if p.is_file() and p.name != "run_manifest.json"}
    manifest = {
        "format": "naturex-run/1",
        "config": cfg.to_dict(),
        "seeds": {phase: cfg.seed_for(phase) for phase in ("synth", "split", "classifier", "gan")},
        "torch_version": torch.__version__,
        "numpy_version": np.__version__,
        "timings_seconds": state.timings,
        "results": {r.method: r.mean_iou for r in state.results},
        "artifacts": artifacts,
    }
    path = state.out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_pipeline(config: RunConfig, resume_from=None, skip_pretrain: bool = False) -> RunState:
    """Run every phase into ``config.out``; returns the final state.

    ``resume_from`` is a classifier checkpoint directory; when given, the
    classifier phase loads it instead of training.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config.to_yaml())
    state = RunState(config, out)
    with deterministic_torch():
        run_synth(state)
        run_classifier(state, resume_from)
        run_gan(state, skip_pretrain)
        run_attribute(state)
        run_evaluate(state)
        run_report(state)
    write_run_manifest(state)
    return state


def load_run_inputs(data_dir, classifier_dir=None, gan_dir=None):
    """Load a saved dataset and optional checkpoints for the single-phase commands."""
    split = load_dataset(data_dir)
    classifier = load_classifier(classifier_dir)[0] if classifier_dir else None
    pair = load_pair(gan_dir)[0] if gan_dir else None
    return split, classifier, pair

