"""Checkpoint archives: parameter tensors keyed by dotted module paths plus a
JSON header recording the config hash, the training step, and the metric
history. Files load with ``weights_only=True`` so untrusted checkpoints stay
inert."""

import json
import os
from pathlib import Path

import torch

from .config import Config, build_model, config_hash

FORMAT_VERSION = 1


def save_checkpoint(path, model, config: Config, step: int,
                    metric_history=None) -> None:
    header = {
        "config_hash": config_hash(config),
        "step": int(step),
        "metric_history": metric_history or [],
    }
    payload = {
        "format_version": FORMAT_VERSION,
        "header_json": json.dumps(header),
        "config": config.to_dict(),
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_header(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    _check_version(payload, path)
    return json.loads(payload["header_json"])


def load_checkpoint(path, map_location="cpu"):
    """Returns (model, config, header) with weights restored and eval() set."""
    payload = torch.load(path, map_location=map_location, weights_only=True)
    _check_version(payload, path)
    config = Config.from_dict(payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    header = json.loads(payload["header_json"])
    return model, config, header


def _check_version(payload: dict, path) -> None:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"checkpoint {os.fspath(path)} has format_version {version!r}, "
            f"expected {FORMAT_VERSION}")
