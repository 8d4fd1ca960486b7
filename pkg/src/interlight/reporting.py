"""File-rendered run artifacts: loss curves from the JSONL training log, and
CSV plus figure companions for a JSON metric report."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricReport  # noqa: E402


def read_jsonl(path) -> list:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def plot_training_curves(log_path, out_path) -> Path:
    """Three panels: path totals, reconstruction terms, schedule values."""
    rows = read_jsonl(log_path)
    if not rows:
        raise ValueError(f"empty training log {log_path}")
    steps = [r["step"] for r in rows]

    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    for key in ("total", "base_total", "mem_total"):
        if key in rows[0]:
            axes[0].plot(steps, [r[key] for r in rows], label=key)
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("loss")
    axes[0].set_title("path totals")
    axes[0].legend()

    for key in sorted(rows[0]):
        if key.startswith("base_") and key != "base_total":
            axes[1].plot(steps, [r[key] for r in rows],
                         label=key.removeprefix("base_"))
    axes[1].set_xlabel("step")
    axes[1].set_title("bypass-path terms")
    if axes[1].lines:
        axes[1].legend(fontsize=8)

    axes[2].plot(steps, [r["lr"] for r in rows], label="lr")
    axes[2].set_ylabel("lr")
    twin = axes[2].twinx()
    twin.plot(steps, [r.get("beta_t", 0.0) for r in rows], color="tab:orange",
              label="beta(t)")
    twin.set_ylabel("beta(t)")
    axes[2].set_xlabel("step")
    axes[2].set_title("schedules")

    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def write_report_csv(report: MetricReport, csv_path) -> Path:
    csv_path = Path(csv_path)
    columns = ["name"]
    for row in report.per_image:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(report.per_image)
    return csv_path


def plot_report_figures(report: MetricReport, stem: Path) -> list:
    """Per-image bar charts and a PSNR/SSIM scatter named <stem>_*.png."""
    names = [row["name"] for row in report.per_image]
    psnrs = [row["psnr_db"] for row in report.per_image]
    ssims = [row["ssim"] for row in report.per_image]
    paths = []

    fig, axes = plt.subplots(2, 1, figsize=(max(6, 0.3 * len(names)), 7),
                             sharex=True)
    x = range(len(names))
    axes[0].bar(x, psnrs, color="tab:blue")
    if report.aggregate.get("mean_psnr") is not None:
        axes[0].axhline(report.aggregate["mean_psnr"], color="tab:red",
                        linestyle="--", label="mean")
        axes[0].legend()
    axes[0].set_ylabel("PSNR (dB)")
    axes[1].bar(x, ssims, color="tab:green")
    if report.aggregate.get("mean_ssim") is not None:
        axes[1].axhline(report.aggregate["mean_ssim"], color="tab:red",
                        linestyle="--")
    axes[1].set_ylabel("SSIM")
    axes[1].set_xticks(list(x))
    axes[1].set_xticklabels(names, rotation=90, fontsize=6)
    fig.tight_layout()
    per_image_path = stem.with_name(stem.name + "_metrics.png")
    fig.savefig(per_image_path, dpi=120)
    plt.close(fig)
    paths.append(per_image_path)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(psnrs, ssims, s=12)
    ax.set_xlabel("PSNR (dB)")
    ax.set_ylabel("SSIM")
    ax.set_title("per-image quality")
    fig.tight_layout()
    scatter_path = stem.with_name(stem.name + "_scatter.png")
    fig.savefig(scatter_path, dpi=120)
    plt.close(fig)
    paths.append(scatter_path)
    return paths


def write_report_artifacts(report: MetricReport, json_path) -> dict:
    """JSON report plus CSV and figures beside it; returns the paths."""
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    report.save(json_path)
    artifacts = {"json": json_path,
                 "csv": write_report_csv(report, json_path.with_suffix(".csv"))}
    if report.per_image:
        stem = json_path.with_suffix("")
        artifacts["figures"] = plot_report_figures(report, stem)
    return artifacts
