"""Reference attribution methods: occlusion sensitivity and GradCAM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .attribution import AttributionMap, image_hash, max_normalize
from .classifier import FrozenModelError
from .data import InvalidInputError

OCCLUSION = "occlusion"
GRADCAM = "gradcam"

# DeepLIFT is not recomputed; these are the published full-scale numbers only.
PUBLISHED_IOU_PERCENT = {"DeepLIFT": 81.2, "OSM": 69.1, "GradCAM": 53.3, "Ours": 93.2}


@dataclass(frozen=True)
class OcclusionConfig:
    patch_size: int = 16
    stride: int = 8
    fill_value: float | Sequence[float] = 0.0

    def __post_init__(self):
        if not 1 <= self.stride <= self.patch_size:
            raise InvalidInputError(f"need 1 <= stride <= patch_size, got {self.stride}, {self.patch_size}")


def window_starts(size: int, patch: int, stride: int) -> list[int]:
    """Window offsets along one axis; the last window is flush with the border."""
    if patch > size:
        raise InvalidInputError(f"occlusion patch {patch} is larger than the image side {size}")
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] != size - patch:
        starts.append(size - patch)
    return starts


def _require_frozen(classifier):
    if not getattr(classifier, "frozen", False):
        raise FrozenModelError("baseline attributions need a frozen classifier")


def _fill(x: np.ndarray, fill_value) -> np.ndarray:
    fill = np.broadcast_to(np.asarray(fill_value, dtype=x.dtype).reshape(-1, 1, 1), (x.shape[0], 1, 1))
    return fill


def _scores(classifier, batch: np.ndarray, chunk: int = 128) -> np.ndarray:
    dtype = next(classifier.parameters()).dtype if any(True for _ in classifier.parameters()) else torch.float64
    out = []
    with torch.no_grad():
        for i in range(0, len(batch), chunk):
            xb = torch.from_numpy(np.array(batch[i:i + chunk])).to(dtype)
            out.append(classifier.score(xb).double().numpy().reshape(-1))
    return np.concatenate(out)


def occlusion_deltas(classifier, x: np.ndarray, config: OcclusionConfig):
    """Score drop for every window position, as an ``(ny, nx)`` grid, plus the offsets."""
    _require_frozen(classifier)
    x = np.asarray(x)
    if x.ndim != 3:
        raise InvalidInputError(f"expected a C x H x W image, got {x.shape}")
    _, H, W = x.shape
    ys = window_starts(H, config.patch_size, config.stride)
    xs = window_starts(W, config.patch_size, config.stride)
    p = config.patch_size
    fill = _fill(x, config.fill_value)
    batch = np.repeat(x[None], len(ys) * len(xs), axis=0)
    for k, (y0, x0) in enumerate((a, b) for a in ys for b in xs):
        batch[k, :, y0:y0 + p, x0:x0 + p] = fill
    base = _scores(classifier, x[None])[0]
    deltas = base - _scores(classifier, batch)
    return deltas.reshape(len(ys), len(xs)), ys, xs


def occlusion_map(classifier, x, config: OcclusionConfig | None = None) -> AttributionMap:
    """Coverage-averaged score drop under sliding occlusion, negatives clamped, max-normalized."""
    config = config or OcclusionConfig()
    x = np.asarray(x)
    deltas, ys, xs = occlusion_deltas(classifier, x, config)
    _, H, W = x.shape
    p = config.patch_size
    rows = np.zeros((len(ys), H))
    cols = np.zeros((len(xs), W))
    for i, y0 in enumerate(ys):
        rows[i, y0:y0 + p] = 1
    for j, x0 in enumerate(xs):
        cols[j, x0:x0 + p] = 1
    total = rows.T @ deltas @ cols
    coverage = rows.T @ np.ones_like(deltas) @ cols
    return AttributionMap(max_normalize(total / coverage), OCCLUSION, (image_hash(x),))


def gradcam_weights(classifier, x, layer=None, target: str = "logit"):
    """Activations of ``layer`` and their channel weights (spatial mean of the gradient).

    ``target="logit"`` differentiates the pre-sigmoid output, ``"score"``
    the sigmoid score; the two differ by a positive factor only.
    """
    _require_frozen(classifier)
    layer = layer if layer is not None else classifier.last_conv_stage
    dtype = next(classifier.parameters()).dtype
    xt = torch.from_numpy(np.array(x)[None]).to(dtype).requires_grad_(True)
    captured = {}

    def hook(module, inputs, output):
        output.retain_grad()
        captured["act"] = output

    handle = layer.register_forward_hook(hook)
    try:
        out = classifier(xt)
    finally:
        handle.remove()
    act = captured.get("act")
    if act is None or act.ndim != 4:
        raise InvalidInputError("GradCAM layer must produce N x C x h x w activations")
    out = torch.sigmoid(out) if target == "score" else out
    out.sum().backward()
    grad = act.grad if act.grad is not None else torch.zeros_like(act)
    weights = grad[0].mean(dim=(1, 2))
    return act[0].detach(), weights.detach()


def gradcam(classifier, x, layer=None, target: str = "logit") -> AttributionMap:
    """ReLU of the gradient-weighted activation sum, bilinearly upsampled and max-normalized."""
    x = np.asarray(x)
    act, weights = gradcam_weights(classifier, x, layer, target)
    cam = F.relu((weights[:, None, None] * act).sum(dim=0))
    cam = F.interpolate(cam[None, None].double(), size=x.shape[1:], mode="bilinear", align_corners=False)
    return AttributionMap(max_normalize(cam[0, 0].numpy()), GRADCAM, (image_hash(x),))
