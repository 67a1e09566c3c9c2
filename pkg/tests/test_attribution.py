import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from naturex.attribution import (INPUT_DIFF, PAIR_DIFF, RAMP_LOW, AttributionMap, AttributionMapper,
                                 attribution_from_pair, attribution_vs_input, colormap, load_map, overlay,
                                 save_map, save_png, threshold_high)
from naturex.data import InvalidInputError

images = arrays(np.float64, (3, 6, 6), elements=st.floats(0, 1, allow_nan=False))


def _rand(seed, shape=(3, 8, 8)):
    return np.random.default_rng(seed).uniform(0, 1, shape)


class TestPairDiff:
    def test_identical_is_zero(self):
        x = _rand(0)
        m = attribution_from_pair(x, x)
        assert m.is_zero() and m.mode == PAIR_DIFF

    def test_single_pixel(self):
        a = np.zeros((3, 4, 4))
        b = a.copy()
        b[0, 1, 2] = 0.2
        m = attribution_from_pair(b, a)
        expected = np.zeros((4, 4))
        expected[1, 2] = 1.0
        np.testing.assert_array_equal(m.values, expected)

    def test_channel_average(self):
        a = np.zeros((3, 2, 2))
        b = a.copy()
        b[:, 0, 0] = (0.3, 0.0, 0.0)
        b[:, 1, 1] = (0.1, 0.1, 0.1)
        m = attribution_from_pair(b, a)
        assert m.values[0, 0] == pytest.approx(m.values[1, 1])

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            attribution_from_pair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    @settings(max_examples=40)
    @given(images, images)
    def test_symmetric(self, a, b):
        np.testing.assert_array_equal(attribution_from_pair(a, b).values, attribution_from_pair(b, a).values)

    @settings(max_examples=40)
    @given(images, images, st.permutations([0, 1, 2]))
    def test_channel_permutation(self, a, b, perm):
        np.testing.assert_allclose(attribution_from_pair(a[perm], b[perm]).values,
                                   attribution_from_pair(a, b).values, atol=1e-15)

    @settings(max_examples=40)
    @given(images, images)
    def test_range_and_max(self, a, b):
        v = attribution_from_pair(a, b).values
        assert v.min() >= 0 and v.max() <= 1
        assert v.max() == 1.0 or not v.any()


class TestInputDiff:
    def test_identity(self):
        x = _rand(1)
        assert attribution_vs_input(x, x).is_zero()

    def test_uniform_shift(self):
        x = np.full((3, 4, 4), 0.25)
        m = attribution_vs_input(x, x + 0.5)
        np.testing.assert_array_equal(m.values, np.ones((4, 4)))
        assert m.mode == INPUT_DIFF

    def test_random_max_one(self):
        v = attribution_vs_input(_rand(2), _rand(3)).values
        assert v.max() == 1.0 and v.min() >= 0


class TestOverlay:
    def test_alpha_zero(self):
        x = _rand(4)
        out = overlay(x, attribution_vs_input(x, _rand(5)), alpha=0)
        np.testing.assert_allclose(out, np.transpose(x, (1, 2, 0)))

    def test_alpha_one(self):
        m = attribution_vs_input(_rand(4), _rand(5))
        np.testing.assert_allclose(overlay(_rand(4), m, alpha=1), colormap(m.values))

    def test_zero_map_blends_low_color(self):
        x = _rand(6)
        out = overlay(x, AttributionMap(np.zeros((8, 8)), PAIR_DIFF), alpha=0.5)
        np.testing.assert_allclose(out, 0.5 * np.transpose(x, (1, 2, 0)) + 0.5 * RAMP_LOW)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            overlay(_rand(0), AttributionMap(np.zeros((4, 4)), PAIR_DIFF))

    def test_png(self, tmp_path):
        from PIL import Image
        path = save_png(overlay(_rand(0), attribution_vs_input(_rand(0), _rand(1))), tmp_path / "o.png")
        assert Image.open(path).size == (8, 8)


class TestThreshold:
    def test_order_statistic(self):
        v = np.full(100, 0.1)
        v[:20] = 0.9
        mask = threshold_high(v.reshape(10, 10), 80)
        assert mask.sum() == 20 and mask.reshape(-1)[:20].all()

    def test_tiny_percentile_selects_all(self):
        v = np.random.default_rng(0).uniform(0.01, 1, (8, 8))
        assert threshold_high(v, 0.00001).all()

    def test_zero_map_warns(self):
        with pytest.warns(RuntimeWarning):
            assert not threshold_high(np.zeros((4, 4))).any()

    def test_bad_percentile(self):
        with pytest.raises(InvalidInputError):
            threshold_high(np.ones((2, 2)), 100)

    @settings(max_examples=40)
    @given(images, images, st.floats(0.01, 100.0))
    def test_scale_invariance(self, a, b, k):
        base = attribution_from_pair(a, b)
        scaled = attribution_from_pair(np.zeros_like(a), k * np.abs(a - b))
        if base.is_zero():
            return
        np.testing.assert_array_equal(threshold_high(base), threshold_high(scaled))


def test_map_roundtrip(tmp_path):
    m = attribution_from_pair(_rand(0), _rand(1))
    path = save_map(m, tmp_path / "maps" / "m0", percentile=80.0, sample_id="x")
    back, meta = load_map(path)
    np.testing.assert_allclose(back.values, m.values.astype(np.float32))
    assert back.mode == m.mode and back.sources == m.sources
    assert meta["sample_id"] == "x" and meta["percentile"] == 80.0


class FakeEnhancer:
    pair_ = object()

    def generate_pair(self, X):
        return np.clip(X + 0.1, 0, 1), np.clip(X - 0.1, 0, 1)


class TestMapper:
    def test_pair_diff(self):
        X = _rand(0, (2, 3, 8, 8)).astype(np.float32)
        out = AttributionMapper(FakeEnhancer()).fit(X).transform(X)
        assert out.shape == (2, 8, 8) and out.max() == 1.0

    def test_input_diff(self):
        X = np.full((1, 3, 4, 4), 0.5, np.float32)
        maps = AttributionMapper(FakeEnhancer(), mode=INPUT_DIFF).fit(X).maps(X)
        np.testing.assert_array_equal(maps[0].values, np.ones((4, 4)))

    def test_bad_mode(self):
        with pytest.raises(InvalidInputError):
            AttributionMapper(FakeEnhancer(), mode="other").fit(np.zeros((1, 3, 4, 4)))
