"""Checkpoints: one parameter blob per network plus a JSON manifest with checksums."""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import torch

from .classifier import ClassifierConfig, ScoreNet, build_classifier
from .data import InvalidInputError
from .ganx import CycleGanPair, GanTrainConfig, pair_from_config

MANIFEST = "manifest.json"
CLASSIFIER_FORMAT = "naturex-classifier/1"
PAIR_FORMAT = "naturex-gan-pair/1"
PAIR_NETWORKS = ("w_plus", "w_minus", "d_plus", "d_minus")


class ChecksumError(RuntimeError):
    """A checkpoint file is missing or does not match its recorded sha256."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_blob(module: torch.nn.Module, path: Path) -> str:
    buf = io.BytesIO()
    torch.save({k: v.detach().cpu().clone() for k, v in module.state_dict().items()}, buf)
    path.write_bytes(buf.getvalue())
    return hashlib.sha256(buf.getvalue()).hexdigest()


def save_checkpoint(directory, networks: dict, meta: dict) -> Path:
    """Write ``<name>.pt`` for every network and ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, module in networks.items():
        files[name] = {"file": f"{name}.pt", "sha256": _write_blob(module, directory / f"{name}.pt")}
    manifest = {**meta, "files": files}
    path = directory / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory, verify: bool = True) -> dict:
    """Load the manifest and check every blob against its recorded checksum."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise ChecksumError(f"no checkpoint manifest at {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ChecksumError(f"unreadable checkpoint manifest {path}: {e}") from e
    if verify:
        for name, entry in manifest.get("files", {}).items():
            blob = directory / entry["file"]
            if not blob.exists():
                raise ChecksumError(f"checkpoint file missing: {blob}")
            if sha256_file(blob) != entry["sha256"]:
                raise ChecksumError(f"checksum mismatch for checkpoint file {blob}")
    return manifest


def checkpoint_hash(directory) -> str:
    """Identity of a checkpoint: sha256 of its manifest (which pins every blob)."""
    return sha256_file(Path(directory) / MANIFEST)


def _load_state(directory: Path, entry: dict) -> dict:
    return torch.load(directory / entry["file"], map_location="cpu", weights_only=True)


def save_classifier(model: ScoreNet, config: ClassifierConfig, directory, *, seed: int,
                    data_hash: str | None = None, normalization_scale: float = 10000.0,
                    report: dict | None = None) -> Path:
    meta = {"format": CLASSIFIER_FORMAT, "config": config.to_dict(), "seed": seed,
            "normalization_scale": normalization_scale, "data_manifest_hash": data_hash,
            "report": report}
    return save_checkpoint(directory, {"classifier": model}, meta)


def load_classifier(directory) -> tuple[ScoreNet, dict]:
    """Rebuild, load and freeze the classifier; returns ``(model, manifest)``."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.get("format") != CLASSIFIER_FORMAT:
        raise InvalidInputError(f"{directory} is not a classifier checkpoint")
    model = build_classifier(ClassifierConfig.from_dict(manifest["config"]))
    model.load_state_dict(_load_state(directory, manifest["files"]["classifier"]))
    return model.freeze(), manifest


def save_pair(pair: CycleGanPair, config: GanTrainConfig, directory, *, seed: int,
              classifier_hash: str | None = None, traces: dict | None = None) -> Path:
    meta = {"format": PAIR_FORMAT, "config": config.to_dict(), "seed": seed,
            "channels": pair.channels, "classifier_checkpoint_hash": classifier_hash,
            "epochs": {"pretrain": config.pretrain_epochs, "main": config.main_epochs},
            "traces": traces or {}}
    networks = dict(zip(PAIR_NETWORKS, (pair.w_plus, pair.w_minus, pair.d_plus, pair.d_minus)))
    return save_checkpoint(directory, networks, meta)


def load_pair(directory) -> tuple[CycleGanPair, GanTrainConfig, dict]:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.get("format") != PAIR_FORMAT:
        raise InvalidInputError(f"{directory} is not a GAN pair checkpoint")
    config = GanTrainConfig.from_dict(manifest["config"])
    pair = pair_from_config(config, manifest["channels"])
    for name in PAIR_NETWORKS:
        getattr(pair, name).load_state_dict(_load_state(directory, manifest["files"][name]))
    pair.eval()
    return pair, config, manifest
