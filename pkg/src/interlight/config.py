"""Declarative run configuration: nested dataclasses, YAML round-trip, a
stable content hash, and factories that build the model, loss, and
augmentation objects from one document. Desk-scale defaults keep runs small;
``paper_scale`` restores the published schedule."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .augment import PgaConfig, PicConfig
from .losses import CompoundLoss, LossConfig
from .model import InterLightModel


@dataclass
class TrainSettings:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    schedule: str = "cosine"
    epochs: int = 50
    batch_size: int = 2
    crop_size: int = 64
    seed: int = 0
    val_fraction: float = 0.1
    eval_every_epochs: int = 10
    num_workers: int = 0
    deterministic: bool = True
    data_root: str = "data/toy"
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop_size % 8 != 0:
            raise ValueError("crop_size must be divisible by 8")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.schedule != "cosine":
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class ModelSettings:
    use_adpg: bool = True
    use_lgim: bool = True
    use_icde: bool = True
    channels: list = field(default_factory=lambda: [36, 36, 72, 144])
    heads: int = 4
    num_atoms: int = 32
    prompt_dim: int = 512
    prfb_spatial_sizes: list = field(default_factory=lambda: [16, 8, 4])
    memory_entries: int = 16
    memory_patch_size: int = 4
    lambda_i: float = 1.2
    lambda_hv: float = 0.8
    ema_momentum: float = 0.0
    k_init: float = 0.2
    share_k: bool = True


@dataclass
class LossSettings:
    mu_hvi: float = 0.5
    mu_p: float = 0.1
    lambda_lgim: float = 1.0
    perceptual_backend: str = "fixed-random-features"
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    feature_seed: int = 0


@dataclass
class PgaSettings:
    gamma_low: float = 0.95
    gamma_high: float = 1.05
    apply_prob: float = 0.3
    tau_d: float = 0.05


@dataclass
class PicSettings:
    crop_margin: int = 16
    crop_mode: str = "margin"
    blur_kernel_min: int = 9
    blur_kernel_max: int = 21
    sigma_low: float = 0.1
    sigma_high: float = 5.0
    beta0: float = 0.1


@dataclass
class Config:
    train: TrainSettings = field(default_factory=TrainSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    loss: LossSettings = field(default_factory=LossSettings)
    pga: PgaSettings = field(default_factory=PgaSettings)
    pic: PicSettings = field(default_factory=PicSettings)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        sections = {f.name: f.default_factory for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ValueError(f"unknown config section(s): {sorted(unknown)}")
        built = {}
        for name, factory in sections.items():
            section_cls = type(factory())
            values = data.get(name, {}) or {}
            valid = {f.name for f in fields(section_cls)}
            bad = set(values) - valid
            if bad:
                raise ValueError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            built[name] = section_cls(**values)
        return cls(**built)


def save_config(config: Config, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


def load_config(path: str | os.PathLike) -> Config:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} is not a mapping")
    return Config.from_dict(data)


def config_hash(config: Config) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def paper_scale(config: Config) -> Config:
    """Published schedule: 1500 epochs, batch 8, 256-pixel crops."""
    cfg = Config.from_dict(config.to_dict())
    cfg.train.epochs = 1500
    cfg.train.batch_size = 8
    cfg.train.crop_size = 256
    return cfg


def build_model(config: Config) -> InterLightModel:
    m = config.model
    return InterLightModel(
        use_adpg=m.use_adpg, use_lgim=m.use_lgim, use_icde=m.use_icde,
        channels=tuple(m.channels), heads=m.heads, num_atoms=m.num_atoms,
        prompt_dim=m.prompt_dim, spatial_sizes=tuple(m.prfb_spatial_sizes),
        memory_entries=m.memory_entries,
        memory_patch_size=m.memory_patch_size, lambda_i=m.lambda_i,
        lambda_hv=m.lambda_hv, ema_momentum=m.ema_momentum, k_init=m.k_init,
        share_k=m.share_k, pga=build_pga(config))


def build_loss(config: Config) -> CompoundLoss:
    s = config.loss
    return CompoundLoss(LossConfig(
        mu_hvi=s.mu_hvi, mu_p=s.mu_p, lambda_lgim=s.lambda_lgim,
        perceptual_backend=s.perceptual_backend, ssim_window=s.ssim_window,
        ssim_sigma=s.ssim_sigma, feature_seed=s.feature_seed))


def build_pga(config: Config) -> PgaConfig:
    s = config.pga
    return PgaConfig(gamma_low=s.gamma_low, gamma_high=s.gamma_high,
                     apply_prob=s.apply_prob, tau_d=s.tau_d)


def build_pic(config: Config, total_steps: int) -> PicConfig:
    s = config.pic
    return PicConfig(crop_margin=s.crop_margin, crop_mode=s.crop_mode,
                     blur_kernel_min=s.blur_kernel_min,
                     blur_kernel_max=s.blur_kernel_max, sigma_low=s.sigma_low,
                     sigma_high=s.sigma_high, beta0=s.beta0,
                     total_steps=max(1, total_steps))
