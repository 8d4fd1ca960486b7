"""Command line entry points: train, enhance, eval, inspect, toydata,
init-config."""

import argparse
import json
import sys
from pathlib import Path

import torch

from .checkpoint import load_checkpoint
from .config import Config, load_config, paper_scale, save_config
from .data import (IMAGE_EXTENSIONS, load_image, make_toy_dataset, save_image,
                   to_tensor)
from .metrics import evaluate_dataset
from .model import count_parameters
from .reporting import write_report_artifacts
from .train import Trainer


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if args.data:
        config.train.data_root = args.data
    if args.out:
        config.train.out_dir = args.out
    if args.paper_scale:
        config = paper_scale(config)
    trainer = Trainer(config, device=args.device)
    ckpt = trainer.train()
    print(f"checkpoint: {ckpt}")
    print(f"log: {trainer.log_path}")
    if trainer.metric_history:
        last = trainer.metric_history[-1]
        print(f"final val: psnr {last['psnr_db']:.2f} dB, "
              f"ssim {last['ssim']:.4f}")
    return 0


def _cmd_enhance(args) -> int:
    model, _, _ = load_checkpoint(args.ckpt)
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        print(f"error: {in_dir} is not a directory", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model.to(args.device)
    count = 0
    for path in sorted(in_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        try:
            img = load_image(path)
        except (ValueError, OSError) as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            continue
        low = to_tensor(img).unsqueeze(0).to(args.device)
        out = model.enhance(low)[0].cpu()
        save_image(out_dir / f"{path.stem}.png", out)
        count += 1
    print(f"enhanced {count} image(s) -> {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    model, _, header = load_checkpoint(args.ckpt)
    report = evaluate_dataset(model.to(args.device), args.data,
                              metric_space=args.metric_space,
                              config_hash=header["config_hash"],
                              device=args.device)
    artifacts = write_report_artifacts(report, args.report)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    agg = report.aggregate
    if agg.get("count"):
        print(f"{agg['count']} image(s): mean psnr {agg['mean_psnr']:.2f} dB, "
              f"mean ssim {agg['mean_ssim']:.4f}")
    for kind, value in artifacts.items():
        if isinstance(value, list):
            for p in value:
                print(f"{kind}: {p}")
        else:
            print(f"{kind}: {value}")
    return 0


def _cmd_inspect(args) -> int:
    model, config, header = load_checkpoint(args.ckpt)
    model = model.to(args.device)
    low = to_tensor(load_image(args.image)).unsqueeze(0).to(args.device)
    with torch.no_grad():
        result = model(low, mode="memory", training=False)
    info = {
        "checkpoint": str(args.ckpt),
        "image": str(args.image),
        "config_hash": header["config_hash"],
        "step": header["step"],
        "parameter_count": count_parameters(model),
        "intensity_exponent_k": [float(v) for v in result.k.flatten()],
        "prompt_coefficients": (result.prompt.coefficients[0].tolist()
                                if result.prompt is not None else None),
        "gate_i": (result.g_i.flatten().tolist()
                   if result.g_i is not None else None),
        "gate_hv": (result.g_hv.flatten().tolist()
                    if result.g_hv is not None else None),
    }
    if config.model.use_lgim:
        info["memory"] = {"intensity_bank": model.bank_i.entry_stats(),
                          "chromatic_bank": model.bank_hv.entry_stats()}
    print(json.dumps(info, indent=2))
    return 0


def _cmd_toydata(args) -> int:
    out = make_toy_dataset(args.out, n=args.n, seed=args.seed, size=args.size)
    print(f"wrote {args.n} pairs under {out}")
    return 0


def _cmd_init_config(args) -> int:
    config = Config()
    if args.paper_scale:
        config = paper_scale(config)
    save_config(config, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interlight",
        description="Low-light image enhancement: training, inference, and "
                    "evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="override the configured data_root")
    p.add_argument("--out", help="override the configured out_dir")
    p.add_argument("--paper-scale", action="store_true",
                   help="published schedule: 1500 epochs, batch 8, crop 256")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("enhance", help="enhance every image in a directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("eval", help="score a paired dataset and write a report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True,
                   help="directory containing low/ and high/")
    p.add_argument("--report", required=True, help="output JSON path")
    p.add_argument("--metric-space", choices=("rgb", "y"), default="rgb")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect",
                       help="print internal diagnostics for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("toydata", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=_cmd_toydata)

    p = sub.add_parser("init-config", help="write a default config file")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=_cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
