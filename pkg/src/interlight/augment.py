"""Training-time data expansion: dark-protected gamma jitter on inputs and
blur-consistency views on outputs.

The gamma jitter (PGA) simulates mild sensor response variation with a
channel-wise power curve, blended by a smoothstep of the per-pixel intensity so
photon-starved pixels pass through bit-identically. The consistency half (PIC)
crops a view from an enhanced output, blurs it, and penalizes the gap with a
cosine-decayed weight. Both are bypassed at inference.
"""

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor


@dataclass
class PgaConfig:
    gamma_low: float = 0.95
    gamma_high: float = 1.05
    apply_prob: float = 0.3
    tau_d: float = 0.05
    # whether the jitter runs after the random training crop
    after_crop: bool = True

    def __post_init__(self):
        if not 0 < self.gamma_low <= self.gamma_high:
            raise ValueError("require 0 < gamma_low <= gamma_high")
        if not 0 < self.tau_d < 1:
            raise ValueError("require 0 < tau_d < 1")
        if not 0 <= self.apply_prob <= 1:
            raise ValueError("apply_prob must lie in [0, 1]")


@dataclass
class PicConfig:
    crop_margin: int = 16
    # "margin" strips crop_margin pixels from each border; "patch" keeps a
    # centered crop_margin x crop_margin patch
    crop_mode: str = "margin"
    blur_kernel_min: int = 9
    blur_kernel_max: int = 21
    sigma_low: float = 0.1
    sigma_high: float = 5.0
    beta0: float = 0.1
    total_steps: int = 1000

    def __post_init__(self):
        if self.blur_kernel_min % 2 == 0 or self.blur_kernel_max % 2 == 0:
            raise ValueError("blur kernel sizes must be odd")
        if self.blur_kernel_min > self.blur_kernel_max:
            raise ValueError("blur_kernel_min must not exceed blur_kernel_max")
        if not self.sigma_low < self.sigma_high:
            raise ValueError("require sigma_low < sigma_high")
        if self.beta0 < 0:
            raise ValueError("beta0 must be >= 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.crop_mode not in ("margin", "patch"):
            raise ValueError(f"unknown crop_mode {self.crop_mode!r}")


def smoothstep_alpha(p_max: Tensor, tau_d: float) -> Tensor:
    """Cubic easing 3t^2 - 2t^3 of t = min(1, p_max / tau_d); 0 in the dark,
    1 once the intensity clears the threshold."""
    if tau_d <= 0:
        raise ValueError("tau_d must be positive")
    t = torch.clamp(p_max / tau_d, max=1.0)
    return 3.0 * t ** 2 - 2.0 * t ** 3


def apply_pga(img: Tensor, cfg: PgaConfig,
              generator: Optional[torch.Generator] = None) -> Tensor:
    """Channel-wise gamma jitter with smoothstep dark protection.

    With probability ``cfg.apply_prob`` per sample, draws gamma ~ U(low, high)
    per channel and blends ``img ** gamma`` against ``img`` with the smoothstep
    alpha. The blend is computed in residual form ``img + alpha * (img**g - img)``
    so unselected samples, zero-intensity pixels, and gamma == 1 all reproduce
    the input bit-for-bit. Consumes no randomness when ``apply_prob == 0``.
    """
    if cfg.apply_prob <= 0:
        return img
    squeeze = img.dim() == 3
    if squeeze:
        img = img.unsqueeze(0)
    b = img.shape[0]
    u = torch.rand(b, generator=generator, dtype=img.dtype, device=img.device)
    gamma = cfg.gamma_low + (cfg.gamma_high - cfg.gamma_low) * torch.rand(
        b, img.shape[1], generator=generator, dtype=img.dtype, device=img.device)
    selected = (u < cfg.apply_prob).view(b, 1, 1, 1)

    p_max = img.amax(dim=1, keepdim=True)
    alpha = smoothstep_alpha(p_max, cfg.tau_d)
    powed = img.clamp(min=0) ** gamma.view(b, -1, 1, 1)
    out = torch.where(selected, img + alpha * (powed - img), img)
    return out.squeeze(0) if squeeze else out


def gaussian_blur(img: Tensor, kernel_size: int, sigma: float) -> Tensor:
    """Separable Gaussian blur with reflection padding (replicate fallback for
    views smaller than the pad)."""
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise ValueError("kernel_size must be a positive odd integer")
    half = kernel_size // 2
    x = torch.arange(kernel_size, dtype=img.dtype, device=img.device) - half
    k1d = torch.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k1d = k1d / k1d.sum()

    squeeze = img.dim() == 3
    if squeeze:
        img = img.unsqueeze(0)
    c = img.shape[1]
    kh = k1d.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    kv = k1d.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    mode = "reflect" if half < min(img.shape[-2:]) else "replicate"
    out = F.pad(img, (half, half, 0, 0), mode=mode)
    out = F.conv2d(out, kh, groups=c)
    out = F.pad(out, (0, 0, half, half), mode=mode)
    out = F.conv2d(out, kv, groups=c)
    return out.squeeze(0) if squeeze else out


def pic_views(output: Tensor, cfg: PicConfig,
              generator: Optional[torch.Generator] = None
              ) -> Optional[tuple[Tensor, Tensor]]:
    """Build (weak, strong) views of an enhanced output.

    weak: center crop per ``cfg.crop_mode``; strong: Gaussian blur of weak with
    kernel size drawn from the odd values in [kernel_min, kernel_max] and
    sigma ~ U(sigma_low, sigma_high). Returns None (skip marker) when the
    output is too small to crop.
    """
    h, w = output.shape[-2:]
    m = cfg.crop_margin
    if cfg.crop_mode == "margin":
        if h <= 2 * m or w <= 2 * m:
            return None
        weak = output[..., m:h - m, m:w - m]
    else:
        if h < m or w < m:
            return None
        top, left = (h - m) // 2, (w - m) // 2
        weak = output[..., top:top + m, left:left + m]

    sizes = list(range(cfg.blur_kernel_min, cfg.blur_kernel_max + 1, 2))
    idx = int(torch.randint(len(sizes), (1,), generator=generator).item())
    sigma = cfg.sigma_low + (cfg.sigma_high - cfg.sigma_low) * float(
        torch.rand(1, generator=generator).item())
    strong = gaussian_blur(weak, sizes[idx], sigma)
    return weak, strong


def consistency_weight(step: int, cfg: PicConfig) -> float:
    """Cosine-decayed weight (beta0/2) * (cos(pi * t / T) + 1); beta0 at t=0,
    0 at t=T. Steps past T clamp to T."""
    t = min(max(step, 0), cfg.total_steps)
    return (cfg.beta0 / 2.0) * (math.cos(math.pi * t / cfg.total_steps) + 1.0)


def consistency_loss(weak: Tensor, strong: Tensor, step: int, cfg: PicConfig) -> Tensor:
    """Decayed mean squared gap between the two views."""
    if weak.shape != strong.shape:
        raise ValueError(f"view shapes differ: {tuple(weak.shape)} vs {tuple(strong.shape)}")
    return consistency_weight(step, cfg) * torch.mean((weak - strong) ** 2)
