"""IoU of high-attribution pixels against reference masks, and the comparison report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .attribution import AttributionMap, threshold_high
from .baselines import PUBLISHED_IOU_PERCENT
from .data import BARE_LAND, MASK_CLASSES, WETLAND, InvalidInputError, SceneSample

DEFAULT_CLASSES = frozenset({WETLAND, BARE_LAND})
CSV_FIELDS = ["method", "n_images", "mean_iou_percent", "percentile", "mode", "classes", "per_image_iou"]
PUBLISHED_MODE = "paper-reported, not recomputed"

# report column -> method names produced by the pipeline; the first match in result order wins
TABLE_COLUMNS = {
    "DeepLIFT": (),
    "OSM": ("occlusion",),
    "GradCAM": ("gradcam",),
    "Ours": ("ours-pair-diff", "ours-input-diff"),
}


def iou(pred, ref) -> float:
    """``|pred & ref| / |pred | ref|``; two empty masks count as perfect agreement."""
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise InvalidInputError(f"iou shape mismatch: {pred.shape} vs {ref.shape}")
    union = np.count_nonzero(pred | ref)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & ref) / union


def reference_mask(mask: np.ndarray, classes: Iterable[int] = DEFAULT_CLASSES) -> np.ndarray:
    classes = set(classes)
    unknown = classes - set(MASK_CLASSES)
    if unknown:
        raise InvalidInputError(f"class ids {sorted(unknown)} are not in the mask scheme {sorted(MASK_CLASSES)}")
    return np.isin(mask, sorted(classes))


def evaluate_attribution(amap: AttributionMap, sample: SceneSample, classes: Iterable[int] = DEFAULT_CLASSES,
                         percentile: float = 80.0) -> float:
    if amap.shape != sample.mask.shape:
        raise InvalidInputError(f"map shape {amap.shape} != mask shape {sample.mask.shape}")
    ref = reference_mask(sample.mask, classes)
    return iou(threshold_high(amap, percentile), ref)


@dataclass
class EvalResult:
    method: str
    ious: list[float] = field(default_factory=list)
    percentile: float = 80.0
    classes: tuple[int, ...] = tuple(sorted(DEFAULT_CLASSES))
    mode: str = ""

    def __post_init__(self):
        self.ious = [float(v) for v in self.ious]
        self.classes = tuple(sorted(self.classes))
        if any(not 0.0 <= v <= 1.0 for v in self.ious):
            raise InvalidInputError("IoU values must lie in [0, 1]")

    @property
    def n_images(self) -> int:
        return len(self.ious)

    @property
    def mean_iou(self) -> float:
        return float(np.mean(self.ious)) if self.ious else float("nan")


def evaluate_maps(method: str, maps: Sequence[AttributionMap], samples: Sequence[SceneSample],
                  classes: Iterable[int] = DEFAULT_CLASSES, percentile: float = 80.0,
                  mode: str = "") -> EvalResult:
    if len(maps) != len(samples):
        raise InvalidInputError(f"{len(maps)} maps for {len(samples)} samples")
    classes = tuple(sorted(set(classes)))
    ious = [evaluate_attribution(m, s, classes, percentile) for m, s in zip(maps, samples)]
    return EvalResult(method, ious, percentile, classes, mode or (maps[0].mode if maps else ""))


def emit_csv(results: Sequence[EvalResult], published_row: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow({
            "method": r.method,
            "n_images": r.n_images,
            "mean_iou_percent": f"{100 * r.mean_iou:.4f}",
            "percentile": repr(float(r.percentile)),
            "mode": r.mode,
            "classes": ";".join(str(c) for c in r.classes),
            "per_image_iou": ";".join(repr(v) for v in r.ious),
        })
    if published_row:
        for name, value in PUBLISHED_IOU_PERCENT.items():
            writer.writerow({"method": name, "n_images": "", "mean_iou_percent": f"{value:.1f}",
                             "percentile": "", "mode": PUBLISHED_MODE, "classes": "", "per_image_iou": ""})
    return buf.getvalue()


def parse_csv(text: str) -> list[EvalResult]:
    """Inverse of :func:`emit_csv`; published reference rows are skipped."""
    results = []
    for row in csv.DictReader(io.StringIO(text)):
        if row["mode"] == PUBLISHED_MODE:
            continue
        ious = [float(v) for v in row["per_image_iou"].split(";")] if row["per_image_iou"] else []
        classes = tuple(int(c) for c in row["classes"].split(";")) if row["classes"] else ()
        if int(row["n_images"]) != len(ious):
            raise InvalidInputError(f"row {row['method']!r}: n_images disagrees with per_image_iou")
        results.append(EvalResult(row["method"], ious, float(row["percentile"]), classes, row["mode"]))
    return results


def _column_value(results: Sequence[EvalResult], column: str) -> str:
    for r in results:
        if r.method in TABLE_COLUMNS[column]:
            return f"{100 * r.mean_iou:.1f}"
    return "n/a"


def format_table(results: Sequence[EvalResult], published_row: bool = True) -> str:
    """Per-method listing followed by a Table-1 style comparison."""
    if not results:
        raise InvalidInputError("report needs at least one result")
    name_w = max(len("method"), *(len(r.method) for r in results))
    lines = [f"{'method':<{name_w}}  {'n':>5}  {'mean IoU %':>10}  {'pct':>5}  mode"]
    for r in results:
        lines.append(f"{r.method:<{name_w}}  {r.n_images:>5d}  {100 * r.mean_iou:>10.2f}  "
                     f"{r.percentile:>5g}  {r.mode}")
    lines.append("")
    cols = list(TABLE_COLUMNS)
    label_w = len(f"IoU % ({PUBLISHED_MODE})")
    lines.append(f"{'Method':<{label_w}}  " + "  ".join(f"{c:>8}" for c in cols))
    lines.append(f"{'IoU % (this run)':<{label_w}}  " + "  ".join(f"{_column_value(results, c):>8}" for c in cols))
    if published_row:
        lines.append(f"{'IoU % (' + PUBLISHED_MODE + ')':<{label_w}}  "
                     + "  ".join(f"{PUBLISHED_IOU_PERCENT[c]:>8.1f}" for c in cols))
    return "\n".join(lines) + "\n"


def report_table(results: Sequence[EvalResult], published_row: bool = True) -> tuple[str, str]:
    """Return ``(text, csv)``; the published row is labeled and never recomputed."""
    if not results:
        raise InvalidInputError("report needs at least one result")
    return format_table(results, published_row), emit_csv(results, published_row)
