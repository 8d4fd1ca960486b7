"""Compound training objective: pixel L1, structural similarity, Laplacian
edge agreement, and an optional feature-space (perceptual) term, evaluated in
both the RGB and polar color domains, with dual-path aggregation over the
baseline and memory outputs."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

PERCEPTUAL_BACKENDS = ("fixed-random-features", "pretrained-vgg", "off")

_LAPLACIAN = torch.tensor([[0.0, 1.0, 0.0],
                           [1.0, -4.0, 1.0],
                           [0.0, 1.0, 0.0]])


@dataclass
class LossConfig:
    mu_hvi: float = 0.5
    mu_p: float = 0.1
    lambda_lgim: float = 1.0
    perceptual_backend: str = "fixed-random-features"
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    feature_seed: int = 0

    def __post_init__(self):
        if min(self.mu_hvi, self.mu_p, self.lambda_lgim) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.perceptual_backend not in PERCEPTUAL_BACKENDS:
            raise ValueError(f"unknown perceptual backend {self.perceptual_backend!r}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 1")


def gaussian_window(size: int, sigma: float, dtype=None, device=None) -> Tensor:
    coords = torch.arange(size, dtype=dtype or torch.float32, device=device)
    coords = coords - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: Tensor, b: Tensor, window_size: int = 11, sigma: float = 1.5,
         c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> Tensor:
    """Mean SSIM over the valid (unpadded) region; differentiable.

    The window shrinks to the largest odd size fitting the image so small
    crops still score.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    h, w = a.shape[-2:]
    size = min(window_size, h, w)
    if size % 2 == 0:
        size -= 1
    if size < 1:
        raise ValueError("image too small for SSIM")
    c = a.shape[1]
    win = gaussian_window(size, sigma, dtype=a.dtype, device=a.device)
    win = win.expand(c, 1, size, size)

    mu_a = F.conv2d(a, win, groups=c)
    mu_b = F.conv2d(b, win, groups=c)
    var_a = (F.conv2d(a * a, win, groups=c) - mu_a ** 2).clamp(min=0)
    var_b = (F.conv2d(b * b, win, groups=c) - mu_b ** 2).clamp(min=0)
    cov = F.conv2d(a * b, win, groups=c) - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def laplacian(x: Tensor) -> Tensor:
    c = x.shape[1]
    kernel = _LAPLACIAN.to(dtype=x.dtype, device=x.device).expand(c, 1, 3, 3)
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), kernel, groups=c)


class RandomFeatureExtractor(nn.Module):
    """Frozen, seeded random conv stack standing in for pretrained features.

    Keeps the feature-space L1 contract without a weight download; the seed
    makes every construction identical.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        dims = [3, 16, 32, 64]
        convs = []
        for c_in, c_out in zip(dims, dims[1:]):
            w = torch.randn(c_out, c_in, 3, 3, generator=gen)
            w = w * (2.0 / (c_in * 9)) ** 0.5
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False)
            with torch.no_grad():
                conv.weight.copy_(w)
            convs.append(conv)
        self.stages = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        for conv in self.stages:
            x = F.gelu(conv(x))
            feats.append(x)
        return feats


class VggFeatureExtractor(nn.Module):

    _TAPS = (3, 8, 15)  # relu1_2, relu2_2, relu3_3

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import VGG16_Weights, vgg16
        except ImportError as exc:
            raise RuntimeError(
                "perceptual_backend='pretrained-vgg' needs torchvision with "
                "offline weights; use 'fixed-random-features' instead") from exc
        try:
            features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
        except Exception as exc:
            raise RuntimeError(
                "could not load pretrained weights (offline?); use "
                "'fixed-random-features' instead") from exc
        self.features = features[: self._TAPS[-1] + 1].eval()
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer(
            "mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer(
            "std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x: Tensor) -> list[Tensor]:
        x = (x - self.mean) / self.std
        feats = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self._TAPS:
                feats.append(x)
        return feats


class CompoundLoss(nn.Module):
    """Reconstruction + consistency objective with per-term breakdown.

    rec_loss = L1 + (1 - SSIM) + edge-L1 [+ mu_p * perceptual, RGB only];
    total = rec(RGB) + mu_hvi * rec(HVI) + consistency;
    dual = total(base) + lambda_lgim * total(memory), consistency counted
    once on the memory path.
    """

    def __init__(self, cfg: LossConfig = None):
        super().__init__()
        self.cfg = cfg if cfg is not None else LossConfig()
        if self.cfg.perceptual_backend == "fixed-random-features":
            self.perceptual = RandomFeatureExtractor(self.cfg.feature_seed)
        elif self.cfg.perceptual_backend == "pretrained-vgg":
            self.perceptual = VggFeatureExtractor()
        else:
            self.perceptual = None

    def _perceptual_term(self, pred: Tensor, target: Tensor) -> Tensor:
        feats_p = self.perceptual(pred)
        feats_t = self.perceptual(target)
        terms = [F.l1_loss(p, t) for p, t in zip(feats_p, feats_t)]
        return torch.stack(terms).mean()

    def rec_loss(self, pred: Tensor, target: Tensor, domain: str = "rgb"
                 ) -> tuple[Tensor, dict]:
        if pred.shape != target.shape:
            raise ValueError(
                f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
        if domain not in ("rgb", "hvi"):
            raise ValueError(f"unknown domain {domain!r}")
        terms = {
            f"l1_{domain}": F.l1_loss(pred, target),
            f"ssim_{domain}": 1.0 - ssim(pred, target, self.cfg.ssim_window,
                                         self.cfg.ssim_sigma),
            f"edge_{domain}": F.l1_loss(laplacian(pred), laplacian(target)),
        }
        total = terms[f"l1_{domain}"] + terms[f"ssim_{domain}"] + terms[f"edge_{domain}"]
        # feature nets expect natural 3-channel images, so the polar domain
        # skips the perceptual term
        if domain == "rgb" and self.perceptual is not None:
            terms["perc_rgb"] = self._perceptual_term(pred, target)
            total = total + self.cfg.mu_p * terms["perc_rgb"]
        return total, terms

    def total_loss(self, pred_rgb: Tensor, gt_rgb: Tensor, pred_hvi: Tensor,
                   gt_hvi: Tensor, consistency: Tensor | float = 0.0
                   ) -> tuple[Tensor, dict]:
        rgb_total, terms = self.rec_loss(pred_rgb, gt_rgb, "rgb")
        hvi_total, hvi_terms = self.rec_loss(pred_hvi, gt_hvi, "hvi")
        terms.update(hvi_terms)
        total = rgb_total + self.cfg.mu_hvi * hvi_total + consistency
        terms["consistency"] = torch.as_tensor(consistency, dtype=total.dtype)
        return total, terms

    def dual_loss(self, base_rgb: Tensor, base_hvi: Tensor, mem_rgb: Tensor,
                  mem_hvi: Tensor, gt_rgb: Tensor, gt_hvi: Tensor,
                  consistency: Tensor | float = 0.0) -> tuple[Tensor, dict]:
        base_total, base_terms = self.total_loss(base_rgb, gt_rgb, base_hvi,
                                                 gt_hvi, 0.0)
        mem_total, mem_terms = self.total_loss(mem_rgb, gt_rgb, mem_hvi,
                                               gt_hvi, consistency)
        terms = {f"base_{k}": v for k, v in base_terms.items() if k != "consistency"}
        terms.update({f"mem_{k}": v for k, v in mem_terms.items()})
        terms["base_total"] = base_total
        terms["mem_total"] = mem_total
        return base_total + self.cfg.lambda_lgim * mem_total, terms
