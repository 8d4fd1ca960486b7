"""Fidelity metrics (PSNR, SSIM) on [0,1] images and paired-folder evaluation
producing a serializable report."""

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import Tensor

from .data import list_pairs, load_image, to_tensor
from .losses import ssim as _ssim_torch

PSNR_CAP_DB = 100.0


def _as_float_tensor(x) -> Tensor:
    t = torch.as_tensor(x)
    return t.to(torch.float64)


def luma(img: Tensor) -> Tensor:
    """BT.601 luma from [..., 3, H, W]."""
    if img.shape[-3] != 3:
        raise ValueError("luma expects a 3-channel image")
    weights = torch.tensor([0.299, 0.587, 0.114], dtype=img.dtype,
                           device=img.device)
    return (img * weights.view(3, 1, 1)).sum(dim=-3, keepdim=True)


def psnr(a, b, metric_space: str = "rgb") -> float:
    """10*log10(1/MSE) on [0,1] images, capped at 100 dB."""
    a, b = _as_float_tensor(a), _as_float_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if metric_space == "y":
        a, b = luma(a), luma(b)
    elif metric_space != "rgb":
        raise ValueError(f"unknown metric space {metric_space!r}")
    mse = torch.mean((a - b) ** 2).item()
    if mse <= 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def ssim(a, b) -> float:
    """Mean SSIM, 11x11 Gaussian window sigma 1.5, valid region only."""
    a, b = _as_float_tensor(a), _as_float_tensor(b)
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    with torch.no_grad():
        return float(_ssim_torch(a, b, window_size=11, sigma=1.5))


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    config_hash: str = ""
    version: int = 1

    def to_dict(self) -> dict:
        return {"version": self.version, "config_hash": self.config_hash,
                "per_image": self.per_image, "aggregate": self.aggregate,
                "missing": self.missing, "warnings": self.warnings}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(per_image=d["per_image"], aggregate=d["aggregate"],
                   missing=d.get("missing", []), warnings=d.get("warnings", []),
                   config_hash=d.get("config_hash", ""),
                   version=d.get("version", 1))

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MetricReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _aggregate(per_image: list) -> dict:
    n = len(per_image)
    if n == 0:
        return {"mean_psnr": None, "mean_ssim": None, "count": 0}
    return {"mean_psnr": sum(r["psnr_db"] for r in per_image) / n,
            "mean_ssim": sum(r["ssim"] for r in per_image) / n,
            "count": n}


def evaluate_dataset(model, dataset_dir, metric_space: str = "rgb",
                     config_hash: str = "", device: str = "cpu",
                     capture_outputs: bool = False):
    """Run the model over <dir>/low, score against <dir>/high, lexicographic
    order. Unmatched names are recorded and excluded from the aggregate.

    With ``capture_outputs`` returns (report, {name: output tensor}) for
    callers that also save or plot the enhanced images.
    """
    pairs, missing = list_pairs(dataset_dir)
    enhance = model.enhance if hasattr(model, "enhance") else model
    per_image, outputs = [], {}
    for name, low_path, high_path in pairs:
        low = to_tensor(load_image(low_path)).unsqueeze(0).to(device)
        high = to_tensor(load_image(high_path))
        with torch.no_grad():
            out = enhance(low)[0].cpu()
        per_image.append({"name": name,
                          "psnr_db": psnr(out, high, metric_space),
                          "ssim": ssim(out, high)})
        if capture_outputs:
            outputs[name] = out
    warnings = []
    if not per_image:
        warnings.append(f"no matched pairs found under {dataset_dir}")
    if missing:
        warnings.append(f"{len(missing)} unmatched file(s) excluded")
    report = MetricReport(per_image=per_image, aggregate=_aggregate(per_image),
                          missing=missing, warnings=warnings,
                          config_hash=config_hash)
    if capture_outputs:
        return report, outputs
    return report
