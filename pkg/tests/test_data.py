import json

import numpy as np
import pytest
import tifffile
from hypothesis import given, settings, strategies as st

from naturex.data import (ANTHROPOGENIC, BARE_LAND, WETLAND, DatasetSplit, InvalidInputError, SceneSample,
                          SynthConfig, cutmix, generate_dataset, generate_synthetic_scene, load_dataset,
                          load_raster, manifest_hash, normalize_raw, sample_from_raster, save_dataset,
                          split_dataset)


def _sample(label, value=0.5, size=8, sid="s"):
    return SceneSample(np.full((3, size, size), value, np.float32), label,
                       np.full((size, size), int(label), np.uint8), "synthetic", sid)


class TestNormalize:
    def test_full_scale_is_one(self):
        assert normalize_raw(np.full((3, 2, 2), 10000))[0, 0, 0] == 1.0

    def test_zero(self):
        assert normalize_raw(np.zeros((3, 2, 2), np.uint16)).max() == 0.0

    def test_clamps_above_scale(self):
        assert normalize_raw(np.full((3, 2, 2), 12000)).max() == 1.0

    def test_negative_band_named(self):
        raw = np.zeros((3, 2, 2), np.int32)
        raw[2, 1, 1] = -5
        with pytest.raises(InvalidInputError, match="band 2"):
            normalize_raw(raw)

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=12, max_size=12))
    def test_idempotent_at_unit_scale(self, values):
        x = np.asarray(values, np.float32).reshape(3, 2, 2)
        once = normalize_raw(x, scale=1)
        np.testing.assert_array_equal(normalize_raw(once, scale=1), once)


class TestLoadRaster:
    def test_ten_band_tiff(self, tmp_path):
        raw = np.arange(10 * 16 * 16, dtype=np.uint16).reshape(10, 16, 16)
        tifffile.imwrite(tmp_path / "scene.tif", raw, photometric="minisblack")
        out, mask = load_raster(tmp_path / "scene.tif")
        assert out.shape == (3, 16, 16)
        np.testing.assert_array_equal(out, raw[:3])
        assert mask is None

    def test_channel_last_npy_with_sidecar(self, tmp_path):
        raw = np.random.default_rng(0).integers(0, 10000, (32, 32, 4)).astype(np.uint16)
        np.save(tmp_path / "scene.npy", raw)
        np.save(tmp_path / "scene_mask.npy", np.ones((32, 32), np.uint8))
        out, mask = load_raster(tmp_path / "scene.npy")
        assert out.shape == (3, 32, 32)
        assert mask.shape == out.shape[1:]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_raster(tmp_path / "nope.tif")

    def test_too_few_bands(self, tmp_path):
        np.save(tmp_path / "two.npy", np.zeros((2, 8, 8), np.uint16))
        with pytest.raises(InvalidInputError, match="at least 3 bands"):
            load_raster(tmp_path / "two.npy")

    def test_sample_from_raster(self, tmp_path):
        tifffile.imwrite(tmp_path / "s.tif", np.full((3, 8, 8), 5000, np.uint16), photometric="minisblack")
        s = sample_from_raster(tmp_path / "s.tif", label=1)
        assert s.provenance == "raster"
        assert np.allclose(s.image, 0.5)


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic_scene(SynthConfig(), 1, 7)
        b = generate_synthetic_scene(SynthConfig(), 1, 7)
        assert a.image.tobytes() == b.image.tobytes()
        assert a.mask.tobytes() == b.mask.tobytes()

    @pytest.mark.parametrize("seed", range(5))
    def test_natural_has_wetland(self, seed):
        assert (generate_synthetic_scene(SynthConfig(), 1, seed).mask == WETLAND).any()

    @pytest.mark.parametrize("seed", range(5))
    def test_anthropogenic_has_no_natural_classes(self, seed):
        s = generate_synthetic_scene(SynthConfig(), 0, seed)
        assert not np.isin(s.mask, (WETLAND, BARE_LAND)).any()
        assert (s.mask == ANTHROPOGENIC).any()

    def test_coverage_over_hundred_scenes(self):
        cfg = SynthConfig()
        for seed in range(100):
            m = generate_synthetic_scene(cfg, 1, seed).mask
            assert np.isin(m, (WETLAND, BARE_LAND)).mean() >= 0.01

    def test_values_in_unit_range(self):
        s = generate_synthetic_scene(SynthConfig(size=32), 1, 3)
        assert s.image.shape == (3, 32, 32)
        assert 0 <= s.image.min() and s.image.max() <= 1

    def test_bad_config(self):
        with pytest.raises(InvalidInputError):
            SynthConfig(blob_radius=(5.0, 2.0))

    def test_sample_is_read_only(self):
        s = generate_synthetic_scene(SynthConfig(size=16), 1, 0)
        with pytest.raises(ValueError):
            s.image[0, 0, 0] = 1.0


class TestCutmix:
    def test_quarter_box_label(self):
        a, b = _sample(1.0, 0.2), _sample(0.0, 0.8)
        out = cutmix(a, b, box=(0, 0, 4, 4))
        assert out.label == pytest.approx(0.75)
        assert np.all(out.image[:, :4, :4] == np.float32(0.8))
        assert np.all(out.mask[:4, :4] == 0) and np.all(out.mask[4:, :] == 1)

    def test_degenerate_box_is_identity(self):
        a, b = _sample(1.0, 0.2), _sample(0.0, 0.8)
        out = cutmix(a, b, box=(0, 0, 0, 0))
        assert out.label == 1.0
        np.testing.assert_array_equal(out.image, a.image)

    def test_equal_labels(self):
        out = cutmix(_sample(1.0), _sample(1.0), np.random.default_rng(0))
        assert out.label == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            cutmix(_sample(1.0, size=8), _sample(0.0, size=4), np.random.default_rng(0))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31 - 1))
    def test_label_between_inputs(self, la, lb, seed):
        out = cutmix(_sample(la), _sample(lb), np.random.default_rng(seed))
        assert min(la, lb) <= out.label <= max(la, lb)


class TestSplit:
    def _samples(self, n):
        return [_sample(float(i % 2), sid=f"s{i}") for i in range(n)]

    def test_sizes(self):
        split = split_dataset(self._samples(100), (0.7, 0.15, 0.15), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (70, 15, 15)

    def test_deterministic(self):
        samples = self._samples(100)
        a = split_dataset(samples, seed=3)
        b = split_dataset(samples, seed=3)
        for (_, pa), (_, pb) in zip(a.items(), b.items()):
            assert [s.sample_id for s in pa] == [s.sample_id for s in pb]

    def test_bad_ratios(self):
        with pytest.raises(InvalidInputError):
            split_dataset(self._samples(100), (0.5, 0.5, 0.5))

    def test_too_few(self):
        with pytest.raises(InvalidInputError, match="too few"):
            split_dataset(self._samples(4))

    def test_disjoint_cover_and_stratified(self):
        samples = self._samples(60)
        split = split_dataset(samples, seed=1)
        ids = [s.sample_id for _, part in split.items() for s in part]
        assert len(ids) == len(set(ids)) == 60
        for _, part in split.items():
            labels = [s.label for s in part]
            assert abs(labels.count(0.0) - labels.count(1.0)) <= 1


def test_dataset_roundtrip_and_manifest(tmp_path):
    cfg = SynthConfig(size=16, n_samples=10, seed=4)
    split = split_dataset(generate_dataset(cfg), seed=4)
    save_dataset(split, tmp_path / "a", cfg, 4)
    save_dataset(split_dataset(generate_dataset(cfg), seed=4), tmp_path / "b", cfg, 4)
    assert manifest_hash(tmp_path / "a") == manifest_hash(tmp_path / "b")
    loaded = load_dataset(tmp_path / "a")
    assert isinstance(loaded, DatasetSplit)
    for (_, orig), (_, back) in zip(split.items(), loaded.items()):
        assert [s.digest() for s in orig] == [s.digest() for s in back]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["size"] == 16 and manifest["seed"] == 4


def test_dataset_checksum_detects_corruption(tmp_path):
    cfg = SynthConfig(size=16, n_samples=10)
    save_dataset(split_dataset(generate_dataset(cfg)), tmp_path, cfg, 0)
    victim = next((tmp_path / "train").glob("*.npz"))
    victim.write_bytes(victim.read_bytes()[:-10] + b"0123456789")
    with pytest.raises(InvalidInputError, match="checksum"):
        load_dataset(tmp_path)
