"""Paired low/high image folders, PNG IO (8- and 16-bit), paired training
augmentation, deterministic train/val splitting, and a synthetic paired
dataset generator for desk-scale runs."""

import os
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
import torch
from torch import Tensor
from torch.utils.data import Dataset


def load_image(path: str | os.PathLike) -> np.ndarray:
    """PNG/JPEG -> float32 RGB HWC in [0, 1]; 16-bit files keep their depth."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"could not read image: {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None].repeat(3, axis=2)
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float32) / scale


def save_image(path: str | os.PathLike, img: Tensor | np.ndarray) -> None:
    """float [3,H,W] or [H,W,3] in [0,1] -> 8-bit PNG."""
    if isinstance(img, Tensor):
        img = img.detach().cpu().numpy()
    if img.ndim == 3 and img.shape[0] in (1, 3):
        img = img.transpose(1, 2, 0)
    if img.shape[2] == 1:
        img = img.repeat(3, axis=2)
    arr = np.clip(img, 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)):
        raise IOError(f"could not write image: {path}")


def to_tensor(img: np.ndarray) -> Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))


IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def list_pairs(root: str | os.PathLike) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """Match files by name across <root>/low and <root>/high.

    Returns lexicographically sorted (name, low, high) triples plus the names
    present on only one side.
    """
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    if not low_dir.is_dir() or not high_dir.is_dir():
        raise FileNotFoundError(f"expected {root}/low and {root}/high directories")

    def index(d: Path) -> dict:
        return {p.name: p for p in d.iterdir()
                if p.suffix.lower() in IMAGE_EXTENSIONS}

    low, high = index(low_dir), index(high_dir)
    names = sorted(set(low) | set(high))
    pairs, missing = [], []
    for name in names:
        if name in low and name in high:
            pairs.append((name, low[name], high[name]))
        else:
            missing.append(name)
    return pairs, missing


def split_pairs(pairs: list, val_fraction: float = 0.1) -> tuple[list, list]:
    """Deterministic split: the lexicographic tail becomes validation."""
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    if val_fraction == 0 or len(pairs) < 2:
        return list(pairs), []
    n_val = max(1, round(len(pairs) * val_fraction))
    n_val = min(n_val, len(pairs) - 1)
    return list(pairs[:-n_val]), list(pairs[-n_val:])


class PairedImageFolder(Dataset):
    """(low, high) tensor pairs with optional paired crop + flips.

    Augmentation draws come from the supplied generator so runs reproduce
    bit-for-bit under a fixed seed.
    """

    def __init__(self, root=None, crop_size: Optional[int] = None,
                 augment: bool = False,
                 generator: Optional[torch.Generator] = None,
                 pairs: Optional[list] = None):
        if pairs is None:
            pairs, _ = list_pairs(root)
        self.pairs = pairs
        self.crop_size = crop_size
        self.augment = augment
        self.generator = generator

    def __len__(self) -> int:
        return len(self.pairs)

    def _rand(self, high: int) -> int:
        return int(torch.randint(high, (1,), generator=self.generator))

    def __getitem__(self, idx: int) -> tuple[Tensor, Tensor]:
        name, low_path, high_path = self.pairs[idx]
        low = to_tensor(load_image(low_path))
        high = to_tensor(load_image(high_path))
        if low.shape != high.shape:
            raise ValueError(f"pair {name!r} has mismatched shapes "
                             f"{tuple(low.shape)} vs {tuple(high.shape)}")
        if self.crop_size is not None:
            c = self.crop_size
            h, w = low.shape[-2:]
            if h < c or w < c:
                raise ValueError(f"pair {name!r} ({h}x{w}) smaller than crop {c}")
            top = self._rand(h - c + 1) if self.augment else (h - c) // 2
            left = self._rand(w - c + 1) if self.augment else (w - c) // 2
            low = low[..., top:top + c, left:left + c]
            high = high[..., top:top + c, left:left + c]
        if self.augment:
            if self._rand(2):
                low, high = low.flip(-1), high.flip(-1)
            if self._rand(2):
                low, high = low.flip(-2), high.flip(-2)
        return low, high


def _smooth_field(rng: np.random.Generator, size: int, channels: int = 3
                  ) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, (8, 8, channels)).astype(np.float32)
    return cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC)


def _draw_shapes(rng: np.random.Generator, img: np.ndarray) -> np.ndarray:
    size = img.shape[0]
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0.1, 0.9, 3)
        if rng.random() < 0.5:
            center = tuple(int(v) for v in rng.integers(0, size, 2))
            radius = int(rng.integers(size // 10, size // 3))
            cv2.circle(img, center, radius, color.tolist(), -1)
        else:
            x0, y0 = rng.integers(0, size - 4, 2)
            x1 = int(x0 + rng.integers(4, size // 2))
            y1 = int(y0 + rng.integers(4, size // 2))
            cv2.rectangle(img, (int(x0), int(y0)), (x1, y1), color.tolist(), -1)
    return img


def make_toy_dataset(out_dir: str | os.PathLike, n: int = 32, seed: int = 7,
                     size: int = 64) -> Path:
    """Synthetic paired set: smooth color fields with shapes as ground truth,
    gamma-darkened + channel-jittered + noisy counterparts as inputs.

    The dark image never exceeds the ground truth pixelwise, so a model whose
    output is bounded below by its input can still reach it exactly. The
    generator is fully seeded; identical arguments give identical bytes.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for i in range(n):
        high = _smooth_field(rng, size)
        high = _draw_shapes(rng, high)
        high = np.clip(high, 0.1, 0.9)

        gamma = rng.uniform(2.0, 4.0)
        gains = rng.uniform(0.85, 1.0, 3).astype(np.float32)
        low = (high ** gamma) * gains
        sigma = 0.005 + 0.025 * (1.0 - low)
        low = low + rng.normal(0.0, 1.0, low.shape).astype(np.float32) * sigma
        low = np.clip(low, 0.0, 1.0)
        low = np.minimum(low, high)

        name = f"{i:04d}.png"
        save_image(out_dir / "high" / name, high)
        save_image(out_dir / "low" / name, low)
    return out_dir
