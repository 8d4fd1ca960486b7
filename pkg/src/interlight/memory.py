"""Bottleneck memory banks: learnable global vectors and local patches are
retrieved by attention and re-injected with a gain that grows as the scene gets
darker (intensity-inverse modulation). A bypass keeps an untouched baseline
path for dual-supervision training."""

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor


def bypass(f_in: Tensor) -> Tensor:
    """Identity stand-in for a disabled memory stage."""
    return f_in


def _pad_to_multiple(x: Tensor, r: int) -> Tensor:
    h, w = x.shape[-2:]
    ph = (r - h % r) % r
    pw = (r - w % r) % r
    if ph == 0 and pw == 0:
        return x
    # reflect needs pad < dim; tiny bottlenecks fall back to replicate
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode)


class MemoryBank(nn.Module):
    """Vector + patch memory with a luminance gate.

    retrieve() attends pooled features over ``global_vectors`` and r-stride
    patches over ``patches``; fuse() adds the retrieval back with gain
    lambda * (1 + sigmoid(eta) * (1 - g)), so dark samples (small g) get up to
    twice the base injection. ``brightness_bias`` adds a per-channel offset
    (intensity branch only). The gate can read a partner-branch reference
    feature instead of its own input.
    """

    def __init__(self, channels: int, entries: int = 16, patch_size: int = 4,
                 lambda_init: float = 1.2, brightness_bias: bool = False,
                 spatial_gate: bool = False, ema_momentum: float = 0.0):
        super().__init__()
        if entries < 1 or patch_size < 1:
            raise ValueError("entries and patch_size must be >= 1")
        if not 0.0 <= ema_momentum < 1.0:
            raise ValueError("ema_momentum must lie in [0, 1)")
        self.channels = channels
        self.patch_size = patch_size
        self.ema_momentum = ema_momentum
        self.spatial_gate = spatial_gate

        self.global_vectors = nn.Parameter(torch.randn(entries, channels) * 0.02)
        self.patches = nn.Parameter(
            torch.randn(entries, channels, patch_size, patch_size) * 0.02)
        self.vector_proj = nn.Conv2d(channels, channels, 1, bias=False)
        self.lambda_scale = nn.Parameter(torch.tensor(float(lambda_init)))
        self.eta = nn.Parameter(torch.tensor(0.0))
        self.brightness_bias = (
            nn.Parameter(torch.zeros(channels)) if brightness_bias else None)
        hidden = max(channels // 4, 1)
        self.gate_mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1), nn.GELU(), nn.Conv2d(hidden, 1, 1))

    def retrieve(self, f_in: Tensor, return_weights: bool = False):
        h, w = f_in.shape[-2:]
        pooled = f_in.mean(dim=(-2, -1))
        logits = pooled @ self.global_vectors.t() / math.sqrt(self.channels)
        vec_weights = torch.softmax(logits, dim=-1)
        vec = self.vector_proj((vec_weights @ self.global_vectors)[..., None, None])
        vec_map = vec.expand(-1, -1, h, w)

        r = self.patch_size
        padded = _pad_to_multiple(f_in, r)
        hp, wp = padded.shape[-2:]
        queries = F.unfold(padded, kernel_size=r, stride=r).transpose(1, 2)
        mem = self.patches.view(self.patches.shape[0], -1)
        patch_weights = torch.softmax(queries @ mem.t(), dim=-1)
        folded = F.fold(
            (patch_weights @ mem).transpose(1, 2),
            output_size=(hp, wp), kernel_size=r, stride=r)
        f_mem = vec_map + folded[..., :h, :w]

        if self.training and self.ema_momentum > 0:
            self._ema_update(pooled, vec_weights, queries, patch_weights)
        if return_weights:
            return f_mem, {"vector_weights": vec_weights,
                           "patch_weights": patch_weights}
        return f_mem

    @torch.no_grad()
    def _ema_update(self, pooled, vec_weights, queries, patch_weights):
        m = self.ema_momentum
        r = self.patch_size
        for b in range(pooled.shape[0]):
            top_v = int(vec_weights[b].argmax())
            self.global_vectors[top_v].mul_(1 - m).add_(m * pooled[b])
            top_p = int(patch_weights[b].mean(dim=0).argmax())
            stat = queries[b].mean(dim=0).view(self.channels, r, r)
            self.patches[top_p].mul_(1 - m).add_(m * stat)

    def luminance_gate(self, f_in: Tensor,
                       reference: Optional[Tensor] = None) -> Tensor:
        feat = f_in if reference is None else reference
        if self.spatial_gate:
            return torch.sigmoid(self.gate_mlp(feat))
        pooled = feat.mean(dim=(-2, -1), keepdim=True)
        return torch.sigmoid(self.gate_mlp(pooled))

    def gain(self, g: Tensor) -> Tensor:
        return self.lambda_scale * (1.0 + torch.sigmoid(self.eta) * (1.0 - g))

    def fuse(self, f_in: Tensor, f_mem: Tensor, g: Tensor) -> Tensor:
        out = f_in + self.gain(g) * f_mem
        if self.brightness_bias is not None:
            out = out + self.brightness_bias.view(1, -1, 1, 1)
        return out

    def forward(self, f_in: Tensor,
                reference: Optional[Tensor] = None) -> Tensor:
        f_mem = self.retrieve(f_in)
        g = self.luminance_gate(f_in, reference)
        return self.fuse(f_in, f_mem, g)

    @torch.no_grad()
    def entry_stats(self) -> dict:
        """Per-entry norms for the inspect surface."""
        return {
            "vector_norms": self.global_vectors.norm(dim=-1).tolist(),
            "patch_norms": self.patches.flatten(1).norm(dim=-1).tolist(),
            "lambda": float(self.lambda_scale),
            "eta": float(self.eta),
        }
