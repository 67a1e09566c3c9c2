import pytest
import torch
import yaml

from conftest import TINY_RUN
from naturex.checkpoint import (ChecksumError, checkpoint_hash, load_classifier, load_pair, read_manifest,
                                save_classifier, save_pair)
from naturex.classifier import ClassifierConfig, build_classifier, parameter_checksum
from naturex.config import DESK_GAN, ConfigError, RunConfig, phase_seed
from naturex.ganx import GanTrainConfig, build_pair


class TestRunConfig:
    def test_defaults_are_desk_scale(self):
        cfg = RunConfig()
        assert cfg.gan.n_res == DESK_GAN["n_res"] and cfg.synth.size == 64 and cfg.synth.n_samples == 1000

    def test_phase_seeds_follow_global_seed(self):
        a, b = RunConfig(seed=1), RunConfig(seed=2)
        assert a.classifier.seed == phase_seed(1, "classifier") != b.classifier.seed
        assert a.synth.seed != a.gan.seed

    def test_phase_seed_is_documented_hash(self):
        import hashlib
        expected = int.from_bytes(hashlib.sha256(b"5:gan").digest()[:4], "big")
        assert phase_seed(5, "gan") == expected

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.from_dict({"seeed": 1})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="'gan'"):
            RunConfig.from_dict({"gan": {"lambda": 0.3}})

    def test_section_seed_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"classifier": {"seed": 4}})

    def test_bad_ratios(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"split": {"ratios": [0.5, 0.5, 0.5]}})

    def test_invalid_value_becomes_config_error(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"synth": {"blob_radius": [9, 2]}})

    def test_yaml_roundtrip(self, tmp_path):
        cfg = RunConfig.from_dict(TINY_RUN)
        path = tmp_path / "c.yaml"
        path.write_text(cfg.to_yaml())
        again = RunConfig.load(path)
        assert again.to_dict() == cfg.to_dict()
        assert again.gan.n_res == 1 and again.synth.size == 32

    def test_unparseable_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [1,\n")
        with pytest.raises(ConfigError):
            RunConfig.load(path)

    def test_overrides(self):
        cfg = RunConfig.from_dict(TINY_RUN).with_overrides(seed=9, out="x")
        assert cfg.seed == 9 and cfg.out == "x" and cfg.synth.size == 32
        assert yaml.safe_load(cfg.to_yaml())["seed"] == 9


class TestCheckpoint:
    def test_classifier_roundtrip(self, tmp_path):
        cfg = ClassifierConfig(base_width=4, depth=2)
        model = build_classifier(cfg, seed=1)
        save_classifier(model, cfg, tmp_path, seed=1, data_hash="abc")
        back, manifest = load_classifier(tmp_path)
        assert back.frozen and parameter_checksum(back) == parameter_checksum(model)
        assert manifest["data_manifest_hash"] == "abc" and manifest["normalization_scale"] == 10000.0

    def test_pair_roundtrip(self, tmp_path):
        cfg = GanTrainConfig(ngf=4, n_res=1, ndf=4, disc_layers=1)
        pair = build_pair(ngf=4, n_res=1, ndf=4, disc_layers=1, seed=5)
        save_pair(pair, cfg, tmp_path, seed=5, classifier_hash="h")
        back, back_cfg, manifest = load_pair(tmp_path)
        assert parameter_checksum(back) == parameter_checksum(pair)
        assert back_cfg == cfg and manifest["classifier_checkpoint_hash"] == "h"

    def test_corruption_names_file(self, tmp_path):
        cfg = ClassifierConfig(base_width=4, depth=2)
        save_classifier(build_classifier(cfg), cfg, tmp_path, seed=0)
        blob = tmp_path / "classifier.pt"
        data = bytearray(blob.read_bytes())
        data[-5] ^= 0xFF
        blob.write_bytes(bytes(data))
        with pytest.raises(ChecksumError, match="classifier.pt"):
            load_classifier(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ChecksumError):
            read_manifest(tmp_path)

    def test_save_is_deterministic(self, tmp_path):
        cfg = ClassifierConfig(base_width=4, depth=2)
        torch.manual_seed(0)
        save_classifier(build_classifier(cfg), cfg, tmp_path / "a", seed=0)
        save_classifier(build_classifier(cfg), cfg, tmp_path / "b", seed=0)
        assert checkpoint_hash(tmp_path / "a") == checkpoint_hash(tmp_path / "b")
