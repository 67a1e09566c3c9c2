"""Input validation shared by the estimators and functional API."""

from __future__ import annotations

import numpy as np
import torch

from .data import InvalidInputError


def check_images(X, channels: int | None = None, min_size: int | None = None,
                 dtype=np.float32) -> np.ndarray:
    """Return ``X`` as a contiguous N x C x H x W array with values in [0, 1].

    A single C x H x W image is promoted to a batch of one.
    """
    if isinstance(X, torch.Tensor):
        X = X.detach().cpu().numpy()
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise InvalidInputError(f"expected N x C x H x W images, got shape {X.shape}")
    if X.shape[0] == 0:
        raise InvalidInputError("empty image batch")
    if channels is not None and X.shape[1] != channels:
        raise InvalidInputError(f"expected {channels} channels, got {X.shape[1]}")
    if min_size is not None and min(X.shape[2:]) < min_size:
        raise InvalidInputError(f"images must be at least {min_size}x{min_size}, got {X.shape[2:]}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("images contain non-finite values")
    if X.min() < 0 or X.max() > 1:
        raise InvalidInputError("image values must lie within [0, 1]")
    return np.ascontiguousarray(X)


def check_same_shape(a, b, what: str = "inputs") -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise InvalidInputError(f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def as_tensor(X, dtype=torch.float32) -> torch.Tensor:
    if isinstance(X, torch.Tensor):
        return X.to(dtype)
    X = np.ascontiguousarray(X)
    if not X.flags.writeable:
        X = X.copy()
    return torch.from_numpy(X).to(dtype)


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float32).reshape(-1)
    if y.shape[0] != n:
        raise InvalidInputError(f"got {y.shape[0]} labels for {n} images")
    if y.min() < 0 or y.max() > 1:
        raise InvalidInputError("labels must lie in [0, 1]")
    return y
