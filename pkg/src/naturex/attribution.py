"""Attribution mapping: per-pixel importance from image differences."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import InvalidInputError
from .validation import check_images, check_same_shape

PAIR_DIFF = "pair-diff"
INPUT_DIFF = "input-diff"
MODES = (PAIR_DIFF, INPUT_DIFF)

# single-hue ramp, black to amber; lightness grows linearly with the value
RAMP_LOW = np.array([0.0, 0.0, 0.0])
RAMP_HIGH = np.array([1.0, 0.72, 0.0])


def image_hash(x) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=np.float32).tobytes()).hexdigest()[:16]


@dataclass(eq=False)
class AttributionMap:
    """H x W importance values in [0, 1]; the maximum is 1 unless the map is all zero."""

    values: np.ndarray
    mode: str
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidInputError(f"attribution map must be H x W, got {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape

    def is_zero(self) -> bool:
        return not np.any(self.values)


def max_normalize(m: np.ndarray) -> np.ndarray:
    m = np.maximum(np.asarray(m, dtype=np.float64), 0.0)
    peak = m.max()
    return m / peak if peak > 0 else np.zeros_like(m)


def _mean_abs_diff(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, "attribution inputs")
    if a.ndim != 3:
        raise InvalidInputError(f"expected C x H x W images, got {a.shape}")
    return max_normalize(np.abs(a - b).mean(axis=0))


def attribution_from_pair(x_max, x_min) -> AttributionMap:
    """Channel-averaged absolute difference of the two generated images, max-normalized."""
    return AttributionMap(_mean_abs_diff(x_max, x_min), PAIR_DIFF, (image_hash(x_max), image_hash(x_min)))


def attribution_vs_input(x, x_hat) -> AttributionMap:
    """Channel-averaged absolute difference between input and one generated image."""
    return AttributionMap(_mean_abs_diff(x, x_hat), INPUT_DIFF, (image_hash(x), image_hash(x_hat)))


def threshold_high(amap, percentile: float = 80.0) -> np.ndarray:
    """Boolean mask of high-attribution pixels.

    Among the ``n`` nonzero values, the ``ceil(n * (1 - percentile / 100))``
    largest are kept (plus ties). An all-zero map yields an empty mask.
    """
    if not 0 < percentile < 100:
        raise InvalidInputError(f"percentile must lie in (0, 100), got {percentile}")
    values = amap.values if isinstance(amap, AttributionMap) else np.asarray(amap, dtype=np.float64)
    nonzero = np.sort(values[values > 0])
    if nonzero.size == 0:
        warnings.warn("all-zero attribution map: no high-attribution pixels", RuntimeWarning, stacklevel=2)
        return np.zeros(values.shape, dtype=bool)
    keep = max(1, math.ceil(nonzero.size * (1 - percentile / 100.0)))
    return values >= nonzero[nonzero.size - keep]


def _as_rgb(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] >= 3:
        rgb = x[:3]
    else:
        rgb = np.repeat(x.mean(axis=0, keepdims=True), 3, axis=0)
    return np.transpose(rgb, (1, 2, 0))


def colormap(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0, 1)[..., None]
    return (1 - v) * RAMP_LOW + v * RAMP_HIGH


def overlay(x, amap: AttributionMap, alpha: float = 0.5) -> np.ndarray:
    """Blend the image (H x W x 3) with the colormapped attribution."""
    if not 0 <= alpha <= 1:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    x = np.asarray(x)
    if x.shape[1:] != amap.shape:
        raise InvalidInputError(f"image spatial shape {x.shape[1:]} != map shape {amap.shape}")
    out = (1 - alpha) * _as_rgb(x) + alpha * colormap(amap.values)
    return np.clip(out, 0.0, 1.0)


def save_png(rgb: np.ndarray, path) -> Path:
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8)).save(path)
    return path


def save_map(amap: AttributionMap, path, percentile: float = 80.0, **meta) -> Path:
    """Write ``<path>.tif`` (float32, single band) and a ``<path>.json`` sidecar."""
    import tifffile

    path = Path(path).with_suffix(".tif")
    path.parent.mkdir(parents=True, exist_ok=True)
    tifffile.imwrite(path, amap.values.astype(np.float32))
    sidecar = {"mode": amap.mode, "sources": list(amap.sources), "percentile": percentile, **meta}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_map(path) -> tuple[AttributionMap, dict]:
    import tifffile

    path = Path(path).with_suffix(".tif")
    meta = json.loads(path.with_suffix(".json").read_text())
    values = np.asarray(tifffile.imread(path), dtype=np.float64)
    return AttributionMap(values, meta["mode"], tuple(meta.get("sources", ()))), meta


class AttributionMapper(TransformerMixin, BaseEstimator):
    """Turn images into attribution maps with a fitted :class:`~naturex.ganx.PatternEnhancer`.

    ``mode="pair-diff"`` compares the maximized and minimized images;
    ``mode="input-diff"`` compares the input with the image produced by
    ``generator`` (``"min"`` or ``"max"``).
    """

    def __init__(self, enhancer=None, mode=PAIR_DIFF, generator="min"):
        self.enhancer = enhancer
        self.mode = mode
        self.generator = generator

    def fit(self, X, y=None):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        if self.generator not in ("min", "max"):
            raise InvalidInputError("generator must be 'min' or 'max'")
        if self.enhancer is None:
            raise InvalidInputError("AttributionMapper needs an enhancer")
        if not hasattr(self.enhancer, "pair_"):
            self.enhancer.fit(X, y)
        self.fitted_ = True
        return self

    def maps(self, X) -> list[AttributionMap]:
        X = check_images(X)
        x_max, x_min = self.enhancer.generate_pair(X)
        if self.mode == PAIR_DIFF:
            return [attribution_from_pair(a, b) for a, b in zip(x_max, x_min)]
        other = x_min if self.generator == "min" else x_max
        return [attribution_vs_input(x, o) for x, o in zip(X, other)]

    def transform(self, X) -> np.ndarray:
        return np.stack([m.values for m in self.maps(X)])
