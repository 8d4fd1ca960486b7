"""Low-light image enhancement with HVI decomposition, degradation prompts,
and luminance-gated memory."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (Config, build_loss, build_model, config_hash,
                     load_config, paper_scale, save_config)
from .hvi import HviTransform, hvi_channels_to_rgb, rgb_to_hvi
from .metrics import MetricReport, evaluate_dataset, psnr, ssim
from .model import InterLightModel, count_parameters
from .train import Trainer

__all__ = [
    "Config", "HviTransform", "InterLightModel", "MetricReport", "Trainer",
    "build_loss", "build_model", "config_hash", "count_parameters",
    "evaluate_dataset", "hvi_channels_to_rgb", "load_checkpoint",
    "load_config", "paper_scale", "psnr", "rgb_to_hvi", "save_checkpoint",
    "save_config", "ssim",
]
