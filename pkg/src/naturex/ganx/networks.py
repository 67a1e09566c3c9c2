"""ResNet generators, PatchGAN discriminators and the maximizer/minimizer pair."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..data import InvalidInputError

MAXIMIZER, MINIMIZER = "max", "min"
POLARITIES = (MAXIMIZER, MINIMIZER)
SKIP_EPS = 1e-3
SKIP_MODES = ("none", "both", "maximizer", "minimizer")


def receptive_field(layers: Sequence[tuple]) -> int:
    """Receptive field of one output unit of a conv stack.

    ``layers`` holds ``(kernel, stride)`` or ``(kernel, stride, padding)``
    tuples in forward order; padding does not change the result.
    """
    r = 1
    for layer in reversed(list(layers)):
        k, s = layer[0], layer[1]
        r = (r - 1) * s + k
    return r


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class ResnetGenerator(nn.Module):
    """Encoder (two stride-2 stages), ``n_res`` residual blocks, decoder, sigmoid.

    Inputs whose sides are not multiples of 4 are reflect-padded and the
    output is cropped back, so the output shape always equals the input shape.

    With ``input_skip=True`` the network predicts a correction in logit
    space, ``sigmoid(logit(x) + f(x))``, and the last conv starts at zero so
    the untrained generator is the identity map.
    """

    def __init__(self, channels: int = 3, ngf: int = 16, n_res: int = 12, polarity: str = MAXIMIZER,
                 upsample: str = "resize", input_skip: bool = False):
        super().__init__()
        if upsample not in ("resize", "transpose"):
            raise InvalidInputError(f"upsample must be 'resize' or 'transpose', got {upsample!r}")
        if polarity not in POLARITIES:
            raise InvalidInputError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
        if n_res < 1:
            raise InvalidInputError("n_res must be >= 1")
        self.channels = channels
        self.polarity = polarity
        self.input_skip = input_skip
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(channels, ngf, 7),
            nn.InstanceNorm2d(ngf),
            nn.ReLU(inplace=True),
        ]
        c = ngf
        for _ in range(2):
            layers += [nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.InstanceNorm2d(2 * c), nn.ReLU(inplace=True)]
            c *= 2
        layers += [ResidualBlock(c) for _ in range(n_res)]
        for _ in range(2):
            if upsample == "resize":
                up = [nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(c, c // 2, 3, padding=1)]
            else:
                up = [nn.ConvTranspose2d(c, c // 2, 3, stride=2, padding=1, output_padding=1)]
            layers += up + [nn.InstanceNorm2d(c // 2), nn.ReLU(inplace=True)]
            c //= 2
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(c, channels, 7)]
        self.net = nn.Sequential(*layers)
        if input_skip:
            nn.init.zeros_(layers[-1].weight)
            nn.init.zeros_(layers[-1].bias)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise InvalidInputError(f"generator expects N x {self.channels} x H x W, got {tuple(x.shape)}")
        H, W = x.shape[2:]
        ph, pw = (-H) % 4, (-W) % 4
        out = self.net(F.pad(x, (0, pw, 0, ph), mode="reflect") if ph or pw else x)[:, :, :H, :W]
        if self.input_skip:
            out = out + torch.logit(x.clamp(SKIP_EPS, 1 - SKIP_EPS))
        return torch.sigmoid(out)


class PatchDiscriminator(nn.Module):
    """PatchGAN: ``n_layers`` stride-2 convs plus two stride-1 convs, all k=4.

    With the default ``n_layers=3`` each output unit sees a 70x70 input patch.
    """

    def __init__(self, channels: int = 3, ndf: int = 16, n_layers: int = 3, polarity: str = MAXIMIZER):
        super().__init__()
        if polarity not in POLARITIES:
            raise InvalidInputError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
        self.channels = channels
        self.polarity = polarity
        self.n_layers = n_layers
        layers = [nn.Conv2d(channels, ndf, 4, stride=2, padding=1), nn.LeakyReLU(0.2, True)]
        c = ndf
        for i in range(1, n_layers):
            c_out = ndf * min(2 ** i, 8)
            layers += [nn.Conv2d(c, c_out, 4, stride=2, padding=1), nn.InstanceNorm2d(c_out), nn.LeakyReLU(0.2, True)]
            c = c_out
        c_out = ndf * min(2 ** n_layers, 8)
        layers += [nn.Conv2d(c, c_out, 4, stride=1, padding=1), nn.InstanceNorm2d(c_out), nn.LeakyReLU(0.2, True)]
        layers += [nn.Conv2d(c_out, 1, 4, stride=1, padding=1), nn.Sigmoid()]
        self.net = nn.Sequential(*layers)

    def layer_specs(self) -> list[tuple[int, int, int]]:
        return [(m.kernel_size[0], m.stride[0], m.padding[0]) for m in self.net if isinstance(m, nn.Conv2d)]

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.layer_specs())

    def forward(self, x):
        return self.net(x)


class CycleGanPair(nn.Module):
    """Pattern-maximizer (``w_plus``, ``d_plus``) and pattern-minimizer (``w_minus``, ``d_minus``)."""

    def __init__(self, w_plus, w_minus, d_plus, d_minus):
        super().__init__()
        if w_plus.polarity != MAXIMIZER or d_plus.polarity != MAXIMIZER:
            raise InvalidInputError("w_plus and d_plus must have maximizer polarity")
        if w_minus.polarity != MINIMIZER or d_minus.polarity != MINIMIZER:
            raise InvalidInputError("w_minus and d_minus must have minimizer polarity")
        if len({m.channels for m in (w_plus, w_minus, d_plus, d_minus)}) != 1:
            raise InvalidInputError("all four networks must accept the same channel count")
        self.w_plus = w_plus
        self.w_minus = w_minus
        self.d_plus = d_plus
        self.d_minus = d_minus

    @property
    def channels(self) -> int:
        return self.w_plus.channels

    def generators(self):
        return self.w_plus, self.w_minus

    def discriminators(self):
        return self.d_plus, self.d_minus


def build_pair(channels: int = 3, ngf: int = 16, n_res: int = 12, ndf: int = 16,
               disc_layers: int = 3, seed: int = 0, upsample: str = "resize",
               input_skip: str = "none") -> CycleGanPair:
    """Both sub-GANs; ``input_skip`` picks which generators get the logit skip:
    ``"none"``, ``"both"``, ``"maximizer"`` or ``"minimizer"``."""
    if input_skip not in SKIP_MODES:
        raise InvalidInputError(f"input_skip must be one of {SKIP_MODES}")
    state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        pair = CycleGanPair(
            ResnetGenerator(channels, ngf, n_res, MAXIMIZER, upsample, input_skip in ("both", "maximizer")),
            ResnetGenerator(channels, ngf, n_res, MINIMIZER, upsample, input_skip in ("both", "minimizer")),
            PatchDiscriminator(channels, ndf, disc_layers, MAXIMIZER),
            PatchDiscriminator(channels, ndf, disc_layers, MINIMIZER),
        )
    finally:
        torch.random.set_rng_state(state)
    return pair
