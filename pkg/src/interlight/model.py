"""Dual-branch U-Net over the polarized color space: an intensity branch and a
chroma branch exchange information through lightweight channel cross-attention,
the chroma encoder is steered by degradation prompts, memory banks act at the
bottleneck, and the output is rebuilt by the inverse color transform plus a
global residual."""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .augment import PgaConfig, apply_pga
from .hvi import HviTransform
from .memory import MemoryBank, bypass
from .prompt import (
    DegradationPrompt,
    GatedFeedForward,
    LatentDegradationEstimator,
    PromptedFusionBlock,
    channel_attention,
)

CHANNELS = (36, 36, 72, 144)
SPATIAL_SIZES = (16, 8, 4)
PAD_FACTOR = 8


def _assert_finite(x: Tensor, stage: str) -> None:
    if not torch.isfinite(x).all():
        raise RuntimeError(f"non-finite activations in stage '{stage}'")


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


class ResBlock(nn.Module):

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1), nn.GELU(),
            nn.Conv2d(channels, channels, 3, padding=1))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.body(x)


class CrossAttentionHalf(nn.Module):
    """One direction of the branch coupler: queries from x, keys/values from
    the partner y, residual form x + proj(attn) + ffn(x)."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ValueError("channels must be divisible by heads")
        self.heads = heads
        self.q_proj = nn.Conv2d(channels, channels, 1)
        self.q_dw = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.kv_proj = nn.Conv2d(channels, 2 * channels, 1)
        self.kv_dw = nn.Conv2d(2 * channels, 2 * channels, 3, padding=1,
                               groups=2 * channels)
        self.temperature = nn.Parameter(torch.ones(heads, 1, 1))
        self.project_out = nn.Conv2d(channels, channels, 1)
        self.ffn = GatedFeedForward(channels, expansion=2)

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        q = self.q_dw(self.q_proj(x))
        k, v = self.kv_dw(self.kv_proj(y)).chunk(2, dim=1)
        attn_out, _ = channel_attention(q, k, v, self.heads, self.temperature)
        return x + self.project_out(attn_out) + self.ffn(x)


class LcaCoupler(nn.Module):
    """Bidirectional coupler; both halves read the pre-update partner."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        self.to_x = CrossAttentionHalf(channels, heads)
        self.to_y = CrossAttentionHalf(channels, heads)

    def forward(self, x: Tensor, y: Tensor) -> tuple[Tensor, Tensor]:
        return self.to_x(x, y), self.to_y(y, x)


class Downsample(nn.Module):

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class PixelShuffleUp(nn.Module):

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out * 4, 3, padding=1)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x: Tensor) -> Tensor:
        return self.shuffle(self.conv(x))


@dataclass
class ForwardResult:
    output: Tensor
    hvi_input: Tensor
    hvi_output: Tensor
    prompt: Optional[DegradationPrompt]
    g_i: Optional[Tensor]
    g_hv: Optional[Tensor]
    k: Tensor


class InterLightModel(nn.Module):
    """Enhancement backbone with three ablation switches.

    ``use_adpg`` swaps the chroma-encoder couplers between prompted fusion and
    plain cross-attention; ``use_lgim`` owns the bottleneck memory banks (the
    ``mode`` argument picks the memory or bypass path at forward time);
    ``use_icde`` arms training-time input augmentation. Inputs of any size are
    reflect-padded to a multiple of 8 and the output cropped back.
    """

    def __init__(self, use_adpg: bool = True, use_lgim: bool = True,
                 use_icde: bool = True, channels: tuple = CHANNELS,
                 heads: int = 4, num_atoms: int = 32, prompt_dim: int = 512,
                 spatial_sizes: tuple = SPATIAL_SIZES,
                 memory_entries: int = 16, memory_patch_size: int = 4,
                 lambda_i: float = 1.2, lambda_hv: float = 0.8,
                 ema_momentum: float = 0.0, k_init: float = 0.2,
                 share_k: bool = True, pga: Optional[PgaConfig] = None):
        super().__init__()
        if len(channels) != 4:
            raise ValueError("channels must list four levels")
        if len(spatial_sizes) != 3:
            raise ValueError("spatial_sizes must list three encoder levels")
        self.use_adpg = use_adpg
        self.use_lgim = use_lgim
        self.use_icde = use_icde
        self.channels = tuple(channels)
        self.prompt_dim = prompt_dim
        self.num_atoms = num_atoms
        self.pga_config = pga if pga is not None else PgaConfig()

        self.hvi = HviTransform(k_init=k_init, share_k=share_k)
        self.stem_i = nn.Conv2d(1, channels[0], 3, padding=1)
        self.stem_hv = nn.Conv2d(2, channels[0], 3, padding=1)

        if use_adpg:
            self.lde = LatentDegradationEstimator(num_atoms, prompt_dim)
            self.prfb = nn.ModuleList([
                PromptedFusionBlock(channels[i], prompt_dim,
                                    spatial_sizes[i], heads)
                for i in range(3)])
            self.enc_lca_hv = None
        else:
            self.lde = None
            self.prfb = None
            self.enc_lca_hv = nn.ModuleList(
                [CrossAttentionHalf(channels[i], heads) for i in range(3)])

        self.enc_res_i = nn.ModuleList([ResBlock(channels[i]) for i in range(3)])
        self.enc_res_hv = nn.ModuleList([ResBlock(channels[i]) for i in range(3)])
        self.enc_lca_i = nn.ModuleList(
            [CrossAttentionHalf(channels[i], heads) for i in range(3)])
        self.down_i = nn.ModuleList(
            [Downsample(channels[i], channels[i + 1]) for i in range(3)])
        self.down_hv = nn.ModuleList(
            [Downsample(channels[i], channels[i + 1]) for i in range(3)])

        self.mid_res_i = ResBlock(channels[3])
        self.mid_res_hv = ResBlock(channels[3])
        if use_lgim:
            self.bank_i = MemoryBank(channels[3], memory_entries,
                                     memory_patch_size, lambda_init=lambda_i,
                                     brightness_bias=True,
                                     ema_momentum=ema_momentum)
            self.bank_hv = MemoryBank(channels[3], memory_entries,
                                      memory_patch_size, lambda_init=lambda_hv,
                                      ema_momentum=ema_momentum)
        else:
            self.bank_i = None
            self.bank_hv = None
        self.mid_lca = LcaCoupler(channels[3], heads)

        self.up_i = nn.ModuleList(
            [PixelShuffleUp(channels[i + 1], channels[i]) for i in range(3)])
        self.up_hv = nn.ModuleList(
            [PixelShuffleUp(channels[i + 1], channels[i]) for i in range(3)])
        self.fuse_i = nn.ModuleList(
            [nn.Conv2d(2 * channels[i], channels[i], 1) for i in range(3)])
        self.fuse_hv = nn.ModuleList(
            [nn.Conv2d(2 * channels[i], channels[i], 1) for i in range(3)])
        self.dec_res_i = nn.ModuleList([ResBlock(channels[i]) for i in range(3)])
        self.dec_res_hv = nn.ModuleList([ResBlock(channels[i]) for i in range(3)])
        self.dec_lca = nn.ModuleList(
            [LcaCoupler(channels[i], heads) for i in range(3)])

        # zero-init heads: the network starts as an exact zero-delta refiner
        self.head_i = nn.Conv2d(channels[0], 1, 3, padding=1)
        self.head_hv = nn.Conv2d(channels[0], 2, 3, padding=1)
        for head in (self.head_i, self.head_hv):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def _pad(self, img: Tensor) -> tuple[Tensor, int, int]:
        h, w = img.shape[-2:]
        ph = (PAD_FACTOR - h % PAD_FACTOR) % PAD_FACTOR
        pw = (PAD_FACTOR - w % PAD_FACTOR) % PAD_FACTOR
        if ph == 0 and pw == 0:
            return img, h, w
        mode = "reflect" if ph < h and pw < w else "replicate"
        return F.pad(img, (0, pw, 0, ph), mode=mode), h, w

    def forward(self, img: Tensor, mode: str = "memory",
                training: bool = False) -> ForwardResult:
        if mode not in ("baseline", "memory"):
            raise ValueError(f"unknown mode {mode!r}")
        if img.dim() != 4 or img.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] input, got {tuple(img.shape)}")

        if training and self.use_icde:
            img = apply_pga(img, self.pga_config)
            _assert_finite(img, "pga")
        img, h0, w0 = self._pad(img)

        hvi = self.hvi(img)
        hvi_in = hvi.stack()
        _assert_finite(hvi_in, "hvi_forward")

        prompt = self.lde(img) if self.use_adpg else None
        i_feat = self.stem_i(hvi.i.unsqueeze(1))
        hv_feat = self.stem_hv(torch.stack([hvi.h, hvi.v], dim=1))

        skips_i, skips_hv = [], []
        for level in range(3):
            i_feat = self.enc_res_i[level](i_feat)
            hv_feat = self.enc_res_hv[level](hv_feat)
            i_new = self.enc_lca_i[level](i_feat, hv_feat)
            if self.use_adpg:
                hv_new = self.prfb[level](hv_feat, i_feat, prompt)
            else:
                hv_new = self.enc_lca_hv[level](hv_feat, i_feat)
            i_feat, hv_feat = i_new, hv_new
            _assert_finite(i_feat, f"encoder_level{level}_i")
            _assert_finite(hv_feat, f"encoder_level{level}_hv")
            skips_i.append(i_feat)
            skips_hv.append(hv_feat)
            i_feat = self.down_i[level](i_feat)
            hv_feat = self.down_hv[level](hv_feat)

        i_feat = self.mid_res_i(i_feat)
        hv_feat = self.mid_res_hv(hv_feat)
        g_i = g_hv = None
        if mode == "memory" and self.use_lgim:
            reference = i_feat
            g_i = self.bank_i.luminance_gate(i_feat)
            i_new = self.bank_i.fuse(i_feat, self.bank_i.retrieve(i_feat), g_i)
            g_hv = self.bank_hv.luminance_gate(hv_feat, reference=reference)
            hv_feat = self.bank_hv.fuse(
                hv_feat, self.bank_hv.retrieve(hv_feat), g_hv)
            i_feat = i_new
        else:
            i_feat = bypass(i_feat)
            hv_feat = bypass(hv_feat)
        i_feat, hv_feat = self.mid_lca(i_feat, hv_feat)
        _assert_finite(i_feat, "bottleneck_i")
        _assert_finite(hv_feat, "bottleneck_hv")

        for level in (2, 1, 0):
            i_feat = self.up_i[level](i_feat)
            hv_feat = self.up_hv[level](hv_feat)
            i_feat = self.fuse_i[level](torch.cat([i_feat, skips_i[level]], dim=1))
            hv_feat = self.fuse_hv[level](torch.cat([hv_feat, skips_hv[level]], dim=1))
            i_feat = self.dec_res_i[level](i_feat)
            hv_feat = self.dec_res_hv[level](hv_feat)
            i_feat, hv_feat = self.dec_lca[level](i_feat, hv_feat)
            _assert_finite(i_feat, f"decoder_level{level}_i")
            _assert_finite(hv_feat, f"decoder_level{level}_hv")

        delta_i = self.head_i(i_feat).squeeze(1)
        delta_hv = self.head_hv(hv_feat)
        i_hat = (hvi.i + delta_i).clamp(0.0, 1.0)
        h_hat = hvi.h + delta_hv[:, 0]
        v_hat = hvi.v + delta_hv[:, 1]
        hvi_out = torch.stack([h_hat, v_hat, i_hat], dim=1)
        _assert_finite(hvi_out, "heads")

        rgb = self.hvi.inverse(h_hat, v_hat, i_hat)
        _assert_finite(rgb, "hvi_inverse")
        out = (rgb + img).clamp(0.0, 1.0)

        return ForwardResult(
            output=out[..., :h0, :w0],
            hvi_input=hvi_in[..., :h0, :w0],
            hvi_output=hvi_out[..., :h0, :w0],
            prompt=prompt,
            g_i=g_i,
            g_hv=g_hv,
            k=self.hvi.k.detach(),
        )

    def enhance(self, img: Tensor) -> Tensor:
        """Inference entry point: memory path, no augmentation."""
        with torch.no_grad():
            return self.forward(img, mode="memory", training=False).output
