"""Scene data model, raster ingestion, synthetic scenes, CutMix and splitting.

Mask class ids are shared by synthetic and ingested data:

====  =====================================
id    meaning
====  =====================================
0     background / non-discriminative
1     wetland-like
2     bare-land-like
3     water
4     anthropogenic (fields, roads)
====  =====================================
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

BACKGROUND, WETLAND, BARE_LAND, WATER, ANTHROPOGENIC = 0, 1, 2, 3, 4
MASK_CLASSES = {
    BACKGROUND: "background",
    WETLAND: "wetland",
    BARE_LAND: "bare_land",
    WATER: "water",
    ANTHROPOGENIC: "anthropogenic",
}
PROVENANCES = ("synthetic", "raster")
SPLIT_NAMES = ("train", "validation", "test")
DATASET_FORMAT = "naturex-dataset/1"
DEFAULT_SCALE = 10000


class InvalidInputError(ValueError):
    """Raised when input data violates a documented precondition."""


@dataclass(frozen=True, eq=False)
class SceneSample:
    """One image with its naturalness label and reference class mask.

    ``image`` is C x H x W float32 in [0, 1], ``mask`` is H x W uint8.
    Both arrays are made read-only on construction.
    """

    image: np.ndarray
    label: float
    mask: np.ndarray
    provenance: str = "synthetic"
    sample_id: str = ""

    def __post_init__(self):
        image = np.asarray(self.image, dtype=np.float32)
        mask = np.asarray(self.mask, dtype=np.uint8)
        if image.ndim != 3:
            raise InvalidInputError(f"image must be C x H x W, got shape {image.shape}")
        if mask.shape != image.shape[1:]:
            raise InvalidInputError(
                f"mask shape {mask.shape} does not match image spatial shape {image.shape[1:]}"
            )
        if not np.all(np.isfinite(image)) or image.min() < 0 or image.max() > 1:
            raise InvalidInputError("image values must be finite and within [0, 1]")
        if not 0.0 <= float(self.label) <= 1.0:
            raise InvalidInputError(f"label must lie in [0, 1], got {self.label}")
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        image = image.copy()
        mask = mask.copy()
        image.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "label", float(self.label))

    @property
    def is_pure(self) -> bool:
        return self.label in (0.0, 1.0)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.image.tobytes())
        h.update(self.mask.tobytes())
        h.update(repr(self.label).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic protected-vs-anthropogenic scene generator.

    Colors are RGB reflectances in [0, 1]; radii and sizes are in pixels.
    """

    size: int = 64
    n_samples: int = 1000
    blob_count: tuple[int, int] = (3, 6)
    blob_radius: tuple[float, float] = (5.0, 10.0)
    min_natural_coverage: float = 0.08
    field_count: tuple[int, int] = (2, 5)
    field_size: tuple[int, int] = (10, 28)
    road_count: tuple[int, int] = (1, 2)
    road_width: int = 2
    water_probability: float = 0.4
    water_radius: tuple[float, float] = (3.0, 5.0)
    vegetation_color: tuple[float, float, float] = (0.20, 0.42, 0.18)
    wetland_color: tuple[float, float, float] = (0.12, 0.30, 0.42)
    bare_land_color: tuple[float, float, float] = (0.62, 0.55, 0.44)
    water_color: tuple[float, float, float] = (0.04, 0.10, 0.28)
    field_color: tuple[float, float, float] = (0.78, 0.68, 0.30)
    road_color: tuple[float, float, float] = (0.52, 0.50, 0.50)
    color_jitter: float = 0.04
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.size < 8:
            raise InvalidInputError(f"size must be >= 8, got {self.size}")
        if self.n_samples < 1:
            raise InvalidInputError("n_samples must be positive")
        for name in ("blob_count", "blob_radius", "field_count", "field_size", "road_count", "water_radius"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise InvalidInputError(f"{name} must be a nonempty nonnegative range, got {(lo, hi)}")
        if self.blob_count[0] < 1:
            raise InvalidInputError("blob_count must allow at least one blob")
        if not 0 <= self.min_natural_coverage < 1:
            raise InvalidInputError("min_natural_coverage must lie in [0, 1)")
        if not 0 <= self.water_probability <= 1:
            raise InvalidInputError("water_probability must lie in [0, 1]")
        if self.noise < 0 or self.color_jitter < 0:
            raise InvalidInputError("noise amplitudes must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class DatasetSplit:
    train: list[SceneSample] = field(default_factory=list)
    validation: list[SceneSample] = field(default_factory=list)
    test: list[SceneSample] = field(default_factory=list)

    def items(self):
        return [("train", self.train), ("validation", self.validation), ("test", self.test)]


# -- normalization and ingestion ------------------------------------------------


def normalize_raw(raw, scale: float = DEFAULT_SCALE) -> np.ndarray:
    """Divide a C x H x W reflectance raster by ``scale`` and clamp to [0, 1]."""
    raw = np.asarray(raw)
    if scale <= 0:
        raise InvalidInputError(f"scale must be positive, got {scale}")
    if raw.ndim != 3:
        raise InvalidInputError(f"raster must be C x H x W, got shape {raw.shape}")
    negative = (raw < 0).reshape(raw.shape[0], -1).any(axis=1)
    if negative.any():
        band = int(np.flatnonzero(negative)[0])
        raise InvalidInputError(f"band {band} contains negative raw values")
    return np.clip(raw.astype(np.float64) / scale, 0.0, 1.0).astype(np.float32)


def _read_array(path: Path) -> np.ndarray:
    if path.suffix.lower() in (".tif", ".tiff"):
        import tifffile

        return np.asarray(tifffile.imread(path))
    if path.suffix.lower() == ".npy":
        return np.load(path, allow_pickle=False)
    raise InvalidInputError(f"unsupported raster format: {path.name}")


def _sidecar_mask_path(path: Path) -> Path | None:
    for suffix in (".tif", ".tiff", ".npy"):
        candidate = path.with_name(f"{path.stem}_mask{suffix}")
        if candidate.exists():
            return candidate
    return None


def load_raster(path, bands: Sequence[int] = (0, 1, 2)):
    """Read a multi-band raster and return ``(raw, mask)``.

    ``raw`` is a 3 x H x W integer array holding ``bands`` (red, green, blue
    in that order). Channel-last rasters are detected by the smallest axis.
    ``mask`` is read from a ``<stem>_mask.{tif,npy}`` sidecar when present,
    otherwise ``None``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raster not found: {path}")
    try:
        arr = _read_array(path)
    except InvalidInputError:
        raise
    except Exception as exc:
        raise InvalidInputError(f"cannot read raster {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise InvalidInputError(f"{path.name}: expected a 3-D band stack, got shape {arr.shape}")
    channel_axis = int(np.argmin(arr.shape))
    arr = np.moveaxis(arr, channel_axis, 0)
    if arr.shape[0] < 3:
        raise InvalidInputError(f"{path.name}: need at least 3 bands, found {arr.shape[0]}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidInputError(f"{path.name}: expected an integer raster, got {arr.dtype}")
    raw = arr[list(bands)]

    mask = None
    mask_path = _sidecar_mask_path(path)
    if mask_path is not None:
        mask = np.squeeze(_read_array(mask_path))
        if mask.shape != raw.shape[1:]:
            raise InvalidInputError(
                f"sidecar mask {mask_path.name} has shape {mask.shape}, expected {raw.shape[1:]}"
            )
        if mask.min() < 0 or mask.max() > max(MASK_CLASSES):
            raise InvalidInputError(f"sidecar mask {mask_path.name} has ids outside {sorted(MASK_CLASSES)}")
        mask = mask.astype(np.uint8)
    return raw, mask


def sample_from_raster(path, label: float, scale: float = DEFAULT_SCALE) -> SceneSample:
    raw, mask = load_raster(path)
    if mask is None:
        mask = np.zeros(raw.shape[1:], dtype=np.uint8)
    return SceneSample(normalize_raw(raw, scale), label, mask, "raster", Path(path).stem)


# -- synthetic scenes ---------------------------------------------------------


def _paint(image, mask, region, color, cls, rng, jitter):
    tint = np.asarray(color) + rng.uniform(-jitter, jitter, size=3)
    image[:, region] = tint[:, None]
    mask[region] = cls


def _blob(rng, size, radius_range):
    """Irregular blob: union of a few overlapping ellipses."""
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = rng.uniform(0, size, size=2)
    r = rng.uniform(*radius_range)
    region = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        oy, ox = rng.normal(0, r / 2, size=2)
        ry, rx = r * rng.uniform(0.6, 1.2, size=2)
        region |= ((yy - cy - oy) / ry) ** 2 + ((xx - cx - ox) / rx) ** 2 <= 1
    return region


def generate_synthetic_scene(config: SynthConfig, class_label: int, seed: int) -> SceneSample:
    """Render one synthetic scene.

    Natural scenes (label 1) hold wetland- and bare-land-like blobs on a
    vegetation background; anthropogenic scenes (label 0) hold rectangular
    fields and straight roads. Small water bodies appear in both classes and
    are therefore not discriminative.
    """
    if class_label not in (0, 1):
        raise InvalidInputError(f"class_label must be 0 or 1, got {class_label}")
    rng = np.random.default_rng(seed)
    s = config.size
    image = np.empty((3, s, s), dtype=np.float64)
    image[:] = np.asarray(config.vegetation_color)[:, None, None]
    mask = np.zeros((s, s), dtype=np.uint8)
    jit = config.color_jitter
    image += rng.uniform(-jit, jit, size=(3, 1, 1))

    if rng.random() < config.water_probability:
        _paint(image, mask, _blob(rng, s, config.water_radius), config.water_color, WATER, rng, jit / 2)

    if class_label == 1:
        n_blobs = int(rng.integers(config.blob_count[0], config.blob_count[1] + 1))
        kinds = [int(k) for k in rng.choice([WETLAND, BARE_LAND], size=n_blobs)]
        for attempt in range(n_blobs + 100):
            coverage = np.isin(mask, (WETLAND, BARE_LAND)).mean()
            if attempt >= n_blobs and coverage >= config.min_natural_coverage:
                break
            kind = kinds[attempt] if attempt < n_blobs else int(rng.choice([WETLAND, BARE_LAND]))
            color = config.wetland_color if kind == WETLAND else config.bare_land_color
            _paint(image, mask, _blob(rng, s, config.blob_radius), color, kind, rng, jit)
        if not (mask == WETLAND).any():
            region = np.zeros((s, s), dtype=bool)
            while not region.any():
                region = _blob(rng, s, config.blob_radius)
            _paint(image, mask, region, config.wetland_color, WETLAND, rng, jit)
    else:
        for _ in range(int(rng.integers(config.field_count[0], config.field_count[1] + 1))):
            h, w = rng.integers(config.field_size[0], config.field_size[1] + 1, size=2)
            y0, x0 = rng.integers(0, s - min(h, s) + 1), rng.integers(0, s - min(w, s) + 1)
            region = np.zeros((s, s), dtype=bool)
            region[y0:y0 + h, x0:x0 + w] = True
            _paint(image, mask, region, config.field_color, ANTHROPOGENIC, rng, jit)
        for _ in range(int(rng.integers(config.road_count[0], config.road_count[1] + 1))):
            pos = int(rng.integers(0, s - config.road_width + 1))
            region = np.zeros((s, s), dtype=bool)
            if rng.random() < 0.5:
                region[pos:pos + config.road_width, :] = True
            else:
                region[:, pos:pos + config.road_width] = True
            _paint(image, mask, region, config.road_color, ANTHROPOGENIC, rng, 0.0)

    image += rng.normal(0.0, config.noise, size=image.shape)
    raw = np.round(np.clip(image, 0.0, 1.0) * DEFAULT_SCALE).astype(np.uint16)
    tag = "nat" if class_label == 1 else "ant"
    return SceneSample(normalize_raw(raw), float(class_label), mask, "synthetic", f"{tag}_{seed}")


def generate_dataset(config: SynthConfig) -> list[SceneSample]:
    """``config.n_samples`` scenes per class, deterministic in ``config.seed``."""
    seeds = np.random.SeedSequence(config.seed).generate_state(2 * config.n_samples, dtype=np.uint32)
    samples = []
    for i in range(config.n_samples):
        for label, seed in ((1, seeds[2 * i]), (0, seeds[2 * i + 1])):
            sample = generate_synthetic_scene(config, label, int(seed))
            tag = "nat" if label == 1 else "ant"
            samples.append(_with_id(sample, f"{tag}_{i:05d}"))
    return samples


def _with_id(sample: SceneSample, sample_id: str) -> SceneSample:
    return SceneSample(sample.image, sample.label, sample.mask, sample.provenance, sample_id)


# -- CutMix -------------------------------------------------------------------


def sample_cutmix_box(rng: np.random.Generator, height: int, width: int,
                      area_range: tuple[float, float] = (0.1, 0.5)) -> tuple[int, int, int, int]:
    """Draw ``(y0, x0, h, w)`` with area fraction uniform in ``area_range``."""
    frac = rng.uniform(*area_range)
    h = min(height, max(1, int(round(height * np.sqrt(frac)))))
    w = min(width, max(1, int(round(width * np.sqrt(frac)))))
    y0 = int(rng.integers(0, height - h + 1))
    x0 = int(rng.integers(0, width - w + 1))
    return y0, x0, h, w


def cutmix(a: SceneSample, b: SceneSample, rng: np.random.Generator | None = None,
           box: tuple[int, int, int, int] | None = None) -> SceneSample:
    """Paste a rectangle of ``b`` into ``a``; the label mixes by pasted area.

    ``box`` = ``(y0, x0, h, w)`` overrides random sampling from ``rng``.
    """
    if a.image.shape != b.image.shape:
        raise InvalidInputError(f"cutmix shape mismatch: {a.image.shape} vs {b.image.shape}")
    _, H, W = a.image.shape
    if box is None:
        if rng is None:
            raise InvalidInputError("cutmix needs either rng or an explicit box")
        box = sample_cutmix_box(rng, H, W)
    y0, x0, h, w = box
    image = np.array(a.image)
    mask = np.array(a.mask)
    region = (slice(y0, y0 + h), slice(x0, x0 + w))
    image[(slice(None),) + region] = b.image[(slice(None),) + region]
    mask[region] = b.mask[region]
    rho = np.zeros((H, W), dtype=bool)
    rho[region] = True
    rho = rho.mean()
    label = (1 - rho) * a.label + rho * b.label
    label = min(max(label, min(a.label, b.label)), max(a.label, b.label))
    return SceneSample(image, label, mask, a.provenance, a.sample_id)


# -- splitting ----------------------------------------------------------------


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    exact = np.asarray(ratios) * n
    sizes = np.floor(exact).astype(int)
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[: n - sizes.sum()]] += 1
    return sizes.tolist()


def split_dataset(samples: Sequence[SceneSample], ratios=(0.7, 0.15, 0.15), seed: int = 0) -> DatasetSplit:
    """Stratified, seeded train/validation/test split.

    Each class is shuffled and the classes are interleaved proportionally, so
    contiguous slices of the merged order keep the class balance; split sizes
    follow ``ratios`` by largest remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidInputError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    if any(not s.is_pure for s in samples):
        raise InvalidInputError("split_dataset needs pure labels (0 or 1)")
    rng = np.random.default_rng(seed)
    keyed = []
    for label in (0.0, 1.0):
        members = [i for i, s in enumerate(samples) if s.label == label]
        members = [members[j] for j in rng.permutation(len(members))]
        for rank, idx in enumerate(members):
            keyed.append(((rank + 0.5) / len(members), label, idx))
    keyed.sort()
    order = [idx for _, _, idx in keyed]

    sizes = _allocate(len(order), ratios)
    bounds = np.cumsum([0] + sizes)
    parts = [[samples[i] for i in order[bounds[k]:bounds[k + 1]]] for k in range(3)]
    for name, part in zip(SPLIT_NAMES, parts):
        labels = {s.label for s in part}
        present = {s.label for s in samples}
        if labels != present:
            raise InvalidInputError(
                f"too few samples to populate the {name} split with every class ({len(samples)} samples)"
            )
    return DatasetSplit(*parts)


def stack_images(samples: Sequence[SceneSample]) -> np.ndarray:
    return np.stack([s.image for s in samples]).astype(np.float32)


def stack_labels(samples: Sequence[SceneSample]) -> np.ndarray:
    return np.asarray([s.label for s in samples], dtype=np.float32)


# -- persistence --------------------------------------------------------------


def _sample_bytes(sample: SceneSample) -> bytes:
    buf = io.BytesIO()
    np.savez_compressed(
        buf,
        image=sample.image,
        mask=sample.mask,
        label=np.float64(sample.label),
        provenance=np.str_(sample.provenance),
        sample_id=np.str_(sample.sample_id),
    )
    return buf.getvalue()


def load_sample(path) -> SceneSample:
    with np.load(path, allow_pickle=False) as z:
        return SceneSample(z["image"], float(z["label"]), z["mask"], str(z["provenance"]), str(z["sample_id"]))


def save_dataset(split: DatasetSplit, root, config: SynthConfig | None = None,
                 seed: int | None = None, extra: dict | None = None) -> Path:
    """Write one ``.npz`` per sample under ``root/<split>/`` plus ``manifest.json``.

    Each ``.npz`` holds ``image`` (float32 C x H x W), ``mask`` (uint8 H x W),
    ``label`` (float64), ``provenance`` and ``sample_id`` (strings).
    Returns the manifest path.
    """
    root = Path(root)
    manifest = {
        "format": DATASET_FORMAT,
        "config": config.to_dict() if config is not None else None,
        "seed": seed,
        "mask_classes": {str(k): v for k, v in MASK_CLASSES.items()},
        "splits": {},
    }
    if extra:
        manifest.update(extra)
    for name, part in split.items():
        (root / name).mkdir(parents=True, exist_ok=True)
        entries = []
        for sample in part:
            payload = _sample_bytes(sample)
            rel = f"{name}/{sample.sample_id}.npz"
            (root / rel).write_bytes(payload)
            entries.append({"id": sample.sample_id, "file": rel, "label": sample.label,
                            "sha256": hashlib.sha256(payload).hexdigest()})
        manifest["splits"][name] = entries
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(root, verify: bool = True) -> DatasetSplit:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise InvalidInputError(f"{manifest_path}: unknown dataset format {manifest.get('format')!r}")
    split = DatasetSplit()
    for name, part in split.items():
        for entry in manifest["splits"].get(name, []):
            path = root / entry["file"]
            if verify:
                digest = hashlib.sha256(path.read_bytes()).hexdigest()
                if digest != entry["sha256"]:
                    raise InvalidInputError(f"checksum mismatch for dataset file {path}")
            part.append(load_sample(path))
    return split


def manifest_hash(root) -> str:
    return hashlib.sha256((Path(root) / "manifest.json").read_bytes()).hexdigest()
