"""HVI color space: polar chrominance modulated by an intensity-driven density map.

The forward transform maps RGB to three planes: two chrominance planes (h, v)
holding saturation in polar form, scaled by a density map that shrinks toward
zero in dark pixels, and an intensity plane equal to the per-pixel channel
maximum. The inverse recovers RGB by re-normalizing the chroma with the density
of the (possibly restored) intensity and applying the standard HSV -> RGB
conversion.

All functions are differentiable almost everywhere and operate on
channel-first tensors shaped ``[..., 3, H, W]`` (any leading batch dims).
"""

import math
from dataclasses import dataclass
from typing import Union

import torch
import torch.nn as nn
from torch import Tensor

EPSILON = 1e-8
# Denominator floor when re-normalizing chroma in the inverse; the inverse is
# ill-posed where the density approaches zero.
NORM_FLOOR = 1e-4
# Below this squared chroma magnitude a pixel is treated as achromatic, which
# keeps atan2/sqrt gradients finite at the origin.
_ACHROMATIC_EPS2 = 1e-20

Scalar = Union[float, Tensor]


def density(p: Tensor, k: Scalar, epsilon: float = EPSILON) -> Tensor:
    """Intensity-driven chroma multiplier ``(sin(pi * p / 2) + epsilon) ** k``.

    Strictly increasing in ``p`` on [0, 1] for fixed ``k > 0``; tends to
    ``epsilon ** k`` as ``p -> 0``, suppressing chroma in photon-starved pixels.

    Args:
        p: intensity in [0, 1], any shape.
        k: positive exponent (float or 0-dim tensor; may be learnable).
        epsilon: numerical floor keeping the base strictly positive.

    Raises:
        ValueError: non-finite input or non-positive ``k``.
    """
    if not torch.isfinite(p).all():
        raise ValueError("density: input contains non-finite values")
    k_val = float(k.detach()) if isinstance(k, Tensor) else float(k)
    if k_val <= 0:
        raise ValueError(f"density: k must be positive, got {k_val}")
    return (torch.sin(math.pi * p / 2.0) + epsilon) ** k


@dataclass
class HviImage:
    """Per-pixel HVI planes plus the density map and exponent that built them.

    ``h`` and ``v`` lie in [-1, 1] (their joint magnitude is bounded by
    ``c_k``), ``i`` is the per-pixel RGB maximum in [0, 1], and ``c_k`` the
    strictly positive density map.
    """

    h: Tensor
    v: Tensor
    i: Tensor
    c_k: Tensor
    k: Scalar
    epsilon: float = EPSILON

    def stack(self) -> Tensor:
        """Channels-first tensor ``[..., 3, H, W]`` in (h, v, i) order."""
        return torch.stack([self.h, self.v, self.i], dim=-3)


def _validate_rgb(rgb: Tensor) -> None:
    if rgb.dim() < 3 or rgb.shape[-3] != 3:
        raise ValueError(f"expected [..., 3, H, W] RGB tensor, got shape {tuple(rgb.shape)}")
    if not torch.isfinite(rgb).all():
        raise ValueError("RGB input contains non-finite values")
    if rgb.min() < -1e-6 or rgb.max() > 1.0 + 1e-6:
        raise ValueError("RGB input must lie in [0, 1]")


def _rgb_to_hsv(rgb: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Differentiable RGB -> (hue, sat, value); hue normalized to [0, 1)."""
    r, g, b = rgb.unbind(dim=-3)
    value, argmax = rgb.max(dim=-3)
    minc = rgb.min(dim=-3).values
    delta = value - minc

    chromatic = delta > 0
    safe_delta = torch.where(chromatic, delta, torch.ones_like(delta))
    hue_r = torch.remainder((g - b) / safe_delta, 6.0)
    hue_g = (b - r) / safe_delta + 2.0
    hue_b = (r - g) / safe_delta + 4.0
    hue6 = torch.where(argmax == 0, hue_r, torch.where(argmax == 1, hue_g, hue_b))
    hue = torch.where(chromatic, hue6 / 6.0, torch.zeros_like(hue6))

    lit = value > 0
    sat = torch.where(lit, delta / torch.where(lit, value, torch.ones_like(value)),
                      torch.zeros_like(value))
    return hue, sat, value


def _hsv_to_rgb(hue: Tensor, sat: Tensor, value: Tensor) -> Tensor:
    """Differentiable HSV -> RGB; hue wraps modulo 1."""
    h6 = torch.remainder(hue, 1.0) * 6.0
    sector = torch.floor(h6).clamp(0, 5)
    f = h6 - sector
    p = value * (1.0 - sat)
    q = value * (1.0 - sat * f)
    t = value * (1.0 - sat * (1.0 - f))

    s = sector.long()
    r = torch.where(s == 0, value, torch.where(s == 1, q, torch.where(
        s == 2, p, torch.where(s == 3, p, torch.where(s == 4, t, value)))))
    g = torch.where(s == 0, t, torch.where(s == 1, value, torch.where(
        s == 2, value, torch.where(s == 3, q, torch.where(s == 4, p, p)))))
    b = torch.where(s == 0, p, torch.where(s == 1, p, torch.where(
        s == 2, t, torch.where(s == 3, value, torch.where(s == 4, value, q)))))
    return torch.stack([r, g, b], dim=-3)


def rgb_to_hvi(rgb: Tensor, k: Scalar, epsilon: float = EPSILON) -> HviImage:
    """Decompose an RGB image in [0, 1] into HVI planes.

    Intensity is the per-pixel channel maximum; chroma is saturation placed at
    the hue angle on the unit circle and scaled by ``density(intensity, k)``.
    """
    _validate_rgb(rgb)
    hue, sat, value = _rgb_to_hsv(rgb)
    c_k = density(value, k, epsilon)
    angle = 2.0 * math.pi * hue
    h = c_k * sat * torch.cos(angle)
    v = c_k * sat * torch.sin(angle)
    return HviImage(h=h, v=v, i=value, c_k=c_k, k=k, epsilon=epsilon)


def hvi_channels_to_rgb(h: Tensor, v: Tensor, i: Tensor, k: Scalar,
                        epsilon: float = EPSILON, floor: float = NORM_FLOOR) -> Tensor:
    """Recover RGB from HVI planes, re-normalizing chroma with ``density(i, k)``.

    The intensity used for normalization is the given (possibly restored) ``i``.
    Pixels with vanishing chroma are treated as achromatic (hue 0, saturation 0)
    so the origin stays differentiable. Output is clamped to [0, 1].
    """
    if not (h.shape == v.shape == i.shape):
        raise ValueError("h, v, i must share a shape")
    if i.min() < -1e-6 or i.max() > 1.0 + 1e-6:
        raise ValueError("intensity channel must lie in [0, 1]")
    i = i.clamp(0.0, 1.0)
    c_k = density(i, k, epsilon)

    chroma_sq = h * h + v * v
    achromatic = chroma_sq < _ACHROMATIC_EPS2
    # Replace degenerate inputs *before* atan2/sqrt so no branch produces NaN
    # gradients that a later torch.where would re-inject.
    h_safe = torch.where(achromatic, torch.ones_like(h), h)
    v_safe = torch.where(achromatic, torch.zeros_like(v), v)
    angle = torch.atan2(v_safe, h_safe)
    hue = torch.where(achromatic, torch.zeros_like(angle),
                      torch.remainder(angle / (2.0 * math.pi), 1.0))

    norm = torch.sqrt(torch.clamp(chroma_sq, min=_ACHROMATIC_EPS2))
    sat = norm / torch.clamp(c_k, min=floor)
    sat = torch.where(achromatic, torch.zeros_like(sat), sat.clamp(0.0, 1.0))

    return _hsv_to_rgb(hue, sat, i).clamp(0.0, 1.0)


def hvi_to_rgb(hvi: HviImage, floor: float = NORM_FLOOR) -> Tensor:
    """Inverse transform of an :class:`HviImage` (see ``hvi_channels_to_rgb``)."""
    return hvi_channels_to_rgb(hvi.h, hvi.v, hvi.i, hvi.k, hvi.epsilon, floor)


def _softplus_inverse(y: float) -> float:
    return math.log(math.expm1(y))


class HviTransform(nn.Module):
    """Forward/inverse HVI transform owning the learnable density exponent.

    The exponent is kept positive through a softplus reparameterization and
    initialized so its effective value is ``k_init``. By default the same
    exponent serves the forward transform and the inverse normalization;
    ``share_k=False`` learns a separate inverse exponent.
    """

    def __init__(self, k_init: float = 0.2, share_k: bool = True,
                 epsilon: float = EPSILON, floor: float = NORM_FLOOR):
        super().__init__()
        if k_init <= 0:
            raise ValueError("k_init must be positive")
        self.share_k = share_k
        self.epsilon = epsilon
        self.floor = floor
        raw = _softplus_inverse(k_init)
        self.k_raw = nn.Parameter(torch.tensor(raw))
        if not share_k:
            self.k_raw_inverse = nn.Parameter(torch.tensor(raw))

    @property
    def k(self) -> Tensor:
        return nn.functional.softplus(self.k_raw)

    @property
    def k_inverse(self) -> Tensor:
        if self.share_k:
            return self.k
        return nn.functional.softplus(self.k_raw_inverse)

    def forward(self, rgb: Tensor) -> HviImage:
        return rgb_to_hvi(rgb, self.k, self.epsilon)

    def inverse(self, h: Tensor, v: Tensor, i: Tensor) -> Tensor:
        return hvi_channels_to_rgb(h, v, i, self.k_inverse, self.epsilon, self.floor)
