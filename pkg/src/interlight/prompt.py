"""Degradation prompting: a small condition encoder estimates how an input is
degraded, expresses that as a soft combination over a learnable dictionary, and
the resulting prompt vector steers the chroma encoder through prompted fusion
blocks (channel affine + spatial prior + gated channel cross-attention)."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor

COND_DIM = 32


def channel_attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
                      temperature: Tensor) -> tuple[Tensor, Tensor]:
    """Transposed (channel) attention: L2-normalize q and k along space,
    divide logits by a per-head temperature, softmax over key channels."""
    h, w = q.shape[-2:]
    q = rearrange(q, "b (head c) h w -> b head c (h w)", head=heads)
    k = rearrange(k, "b (head c) h w -> b head c (h w)", head=heads)
    v = rearrange(v, "b (head c) h w -> b head c (h w)", head=heads)
    q = F.normalize(q, dim=-1)
    k = F.normalize(k, dim=-1)
    attn = torch.softmax(q @ k.transpose(-2, -1) / temperature, dim=-1)
    out = rearrange(attn @ v, "b head c (h w) -> b (head c) h w", h=h, w=w)
    return out, attn


@dataclass
class DegradationPrompt:
    """Prompt vector p [B, d_p] with its dictionary coefficients [B, K]."""
    p: Tensor
    coefficients: Tensor

    @classmethod
    def zeros(cls, batch: int, prompt_dim: int = 512, num_atoms: int = 32,
              device=None, dtype=None) -> "DegradationPrompt":
        p = torch.zeros(batch, prompt_dim, device=device, dtype=dtype)
        coeffs = torch.full((batch, num_atoms), 1.0 / num_atoms,
                            device=device, dtype=dtype)
        return cls(p=p, coefficients=coeffs)


class DegradationDictionary(nn.Module):
    """Learnable atom bank; combine(coeffs) = GELU(coeffs @ atoms)."""

    def __init__(self, num_atoms: int = 32, prompt_dim: int = 512):
        super().__init__()
        if num_atoms < 1:
            raise ValueError("num_atoms must be >= 1")
        self.atoms = nn.Parameter(torch.randn(num_atoms, prompt_dim) * 0.02)

    def forward(self, coefficients: Tensor) -> Tensor:
        return F.gelu(coefficients @ self.atoms)


class LatentDegradationEstimator(nn.Module):
    """Condition encoder -> GAP -> softmax over dictionary atoms -> prompt.

    Encoder: three stride-2 3x3 convs (3->16->32->32) then two 1x1 convs,
    GELU throughout; degradation stats need context, not resolution.
    """

    def __init__(self, num_atoms: int = 32, prompt_dim: int = 512):
        super().__init__()
        self.condition_net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(32, COND_DIM, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(COND_DIM, COND_DIM, 1), nn.GELU(),
            nn.Conv2d(COND_DIM, COND_DIM, 1),
        )
        self.proj_alpha = nn.Linear(COND_DIM, num_atoms, bias=False)
        self.dictionary = DegradationDictionary(num_atoms, prompt_dim)

    def forward(self, img: Tensor) -> DegradationPrompt:
        z = self.condition_net(img).mean(dim=(-2, -1))
        coefficients = torch.softmax(self.proj_alpha(z), dim=-1)
        return DegradationPrompt(p=self.dictionary(coefficients),
                                 coefficients=coefficients)


class GatedFeedForward(nn.Module):
    """Gated depthwise-conv feed-forward (expand, dwconv, gate, project)."""

    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        hidden = dim * expansion
        self.project_in = nn.Conv2d(dim, hidden * 2, 1)
        self.dwconv = nn.Conv2d(hidden * 2, hidden * 2, 3, padding=1,
                                groups=hidden * 2)
        self.project_out = nn.Conv2d(hidden, dim, 1)

    def forward(self, x: Tensor) -> Tensor:
        x1, x2 = self.dwconv(self.project_in(x)).chunk(2, dim=1)
        return self.project_out(F.gelu(x1) * x2)


class PromptedFusionBlock(nn.Module):
    """Injects a degradation prompt into a chroma feature while cross-attending
    to the intensity feature.

    The prompt acts twice: a channel affine (1+gamma, beta) on x, and a spatial
    prior map that competes with the modulated content through a learned pixel
    gate to form the attention query. Keys/values come from the partner branch
    y. Attention is transposed (channel) attention with L2-normalized queries
    and keys and a learnable per-head temperature divisor.
    """

    def __init__(self, channels: int, prompt_dim: int = 512,
                 spatial_size: int = 16, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ValueError("channels must be divisible by heads")
        self.channels = channels
        self.spatial_size = spatial_size
        self.heads = heads

        self.proj_gamma = nn.Linear(prompt_dim, channels)
        self.proj_beta = nn.Linear(prompt_dim, channels)
        self.proj_spatial = nn.Linear(prompt_dim, channels * spatial_size ** 2)
        self.spatial_conv = nn.Conv2d(channels, channels, 3, padding=1)
        nn.init.zeros_(self.proj_gamma.bias)
        nn.init.zeros_(self.proj_beta.bias)
        nn.init.zeros_(self.proj_spatial.bias)
        nn.init.zeros_(self.spatial_conv.bias)

        self.q1_conv = nn.Conv2d(channels, channels, 1)
        self.q2_conv = nn.Conv2d(channels, channels, 1)
        self.gate_dw = nn.Conv2d(2 * channels, 2 * channels, 3, padding=1,
                                 groups=2 * channels)
        self.gate_pw = nn.Conv2d(2 * channels, channels, 1)
        self.q_dw = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.kv_proj = nn.Conv2d(channels, 2 * channels, 1)
        self.kv_dw = nn.Conv2d(2 * channels, 2 * channels, 3, padding=1,
                               groups=2 * channels)
        self.temperature = nn.Parameter(torch.ones(heads, 1, 1))
        self.project_out = nn.Conv2d(channels, channels, 1)
        self.ffn = GatedFeedForward(channels, expansion=2)

    def affine_modulate(self, x: Tensor, prompt: DegradationPrompt) -> Tensor:
        gamma = torch.sigmoid(self.proj_gamma(prompt.p))[..., None, None]
        beta = self.proj_beta(prompt.p)[..., None, None]
        return x * (1.0 + gamma) + beta

    def spatial_prompt(self, prompt: DegradationPrompt,
                       target_hw: tuple[int, int]) -> Tensor:
        s = self.spatial_size
        grid = self.proj_spatial(prompt.p).view(-1, self.channels, s, s)
        grid = self.spatial_conv(grid)
        if grid.shape[-2:] == tuple(target_hw):
            return grid
        return F.interpolate(grid, size=target_hw, mode="bilinear",
                             align_corners=False)

    def _channel_attention(self, q: Tensor, k: Tensor, v: Tensor
                           ) -> tuple[Tensor, Tensor]:
        return channel_attention(q, k, v, self.heads, self.temperature)

    def forward(self, x: Tensor, y: Tensor, prompt: DegradationPrompt) -> Tensor:
        if x.shape != y.shape:
            raise ValueError(f"branch shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
        x_mod = self.affine_modulate(x, prompt)
        p_s = self.spatial_prompt(prompt, x.shape[-2:])

        q1 = self.q1_conv(p_s)
        q2 = self.q2_conv(x_mod)
        gate = torch.sigmoid(self.gate_pw(self.gate_dw(torch.cat([q1, q2], dim=1))))
        q = self.q_dw(gate * q1 + (1.0 - gate) * q2)
        k, v = self.kv_dw(self.kv_proj(y)).chunk(2, dim=1)
        attn_out, _ = self._channel_attention(q, k, v)
        return x + self.project_out(attn_out) + self.ffn(x)
