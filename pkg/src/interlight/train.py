"""Training loop: one optimizer step covers a bypass forward and a memory
forward of the same (optionally gamma-jittered) batch, a blur-consistency
penalty on the memory output, cosine learning rate decay, JSONL step logging,
and checkpoints that survive a non-finite abort."""

import json
import math
import sys
import time
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .augment import apply_pga, consistency_loss, consistency_weight, pic_views
from .checkpoint import save_checkpoint
from .config import (Config, build_loss, build_model, build_pga, build_pic,
                     save_config)
from .data import PairedImageFolder, list_pairs, load_image, split_pairs, to_tensor
from .metrics import psnr, ssim


class NonFiniteLossError(RuntimeError):
    """Loss went NaN/Inf; the last good checkpoint stays on disk."""


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at step 0 to 0 at the final step."""
    if total_steps <= 1:
        return lr0
    s = min(max(step, 0), total_steps - 1)
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * s / (total_steps - 1)))


class Trainer:

    def __init__(self, config: Config, device: str = "cpu"):
        self.config = config
        self.device = torch.device(device)
        t = config.train
        if t.deterministic:
            torch.set_num_threads(1)
        torch.manual_seed(t.seed)

        self.model = build_model(config).to(self.device)
        self.loss = build_loss(config).to(self.device)
        self.pga_cfg = build_pga(config)

        pairs, missing = list_pairs(t.data_root)
        if missing:
            print(f"warning: {len(missing)} unmatched file(s) under "
                  f"{t.data_root} ignored", file=sys.stderr)
        if not pairs:
            raise ValueError(f"no paired images under {t.data_root}")
        self.train_pairs, self.val_pairs = split_pairs(pairs, t.val_fraction)

        # independent streams so changing e.g. the jitter draw count cannot
        # shift the crop positions of later batches
        self.crop_generator = torch.Generator().manual_seed(t.seed + 1)
        self.loader_generator = torch.Generator().manual_seed(t.seed + 2)
        self.aug_generator = torch.Generator().manual_seed(t.seed + 3)

        dataset = PairedImageFolder(pairs=self.train_pairs,
                                    crop_size=t.crop_size, augment=True,
                                    generator=self.crop_generator)
        self.loader = DataLoader(dataset, batch_size=t.batch_size,
                                 shuffle=True, generator=self.loader_generator,
                                 num_workers=t.num_workers)
        self.total_steps = t.epochs * len(self.loader)
        self.pic_cfg = build_pic(config, self.total_steps)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=t.lr,
                                          betas=(t.beta1, t.beta2))

        self.out_dir = Path(t.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.out_dir / "train_log.jsonl"
        self.checkpoint_path = self.out_dir / "model.ckpt"
        self.metric_history = []
        self.step = 0

    def train(self) -> Path:
        t = self.config.train
        save_config(self.config, self.out_dir / "config.yaml")
        save_checkpoint(self.checkpoint_path, self.model, self.config,
                        self.step, self.metric_history)
        with open(self.log_path, "w") as log:
            for epoch in range(t.epochs):
                for low, high in self.loader:
                    row = self.train_step(low, high)
                    log.write(json.dumps(row) + "\n")
                last = epoch == t.epochs - 1
                if self.val_pairs and (last or (epoch + 1) % t.eval_every_epochs == 0):
                    scores = self.validate()
                    self.metric_history.append({"step": self.step, **scores})
                    save_checkpoint(self.checkpoint_path, self.model,
                                    self.config, self.step,
                                    self.metric_history)
        save_checkpoint(self.checkpoint_path, self.model, self.config,
                        self.step, self.metric_history)
        from .reporting import plot_training_curves
        plot_training_curves(self.log_path, self.out_dir / "loss_curves.png")
        return self.checkpoint_path

    def train_step(self, low, high) -> dict:
        t0 = time.perf_counter()
        lr = cosine_lr(self.step, self.total_steps, self.config.train.lr)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        low = low.to(self.device)
        high = high.to(self.device)

        use_icde = self.config.model.use_icde
        if use_icde and self.pga_cfg.apply_prob > 0:
            low = apply_pga(low, self.pga_cfg, generator=self.aug_generator)

        self.optimizer.zero_grad(set_to_none=True)
        base = self.model(low, mode="baseline", training=False)
        mem = self.model(low, mode="memory", training=False)
        with torch.no_grad():
            gt_hvi = self.model.hvi(high).stack().detach()

        use_pic = use_icde and self.pic_cfg.beta0 > 0
        beta_t = consistency_weight(self.step, self.pic_cfg) if use_pic else 0.0
        consistency = 0.0
        if use_pic:
            views = pic_views(mem.output, self.pic_cfg,
                              generator=self.aug_generator)
            if views is not None:
                consistency = consistency_loss(views[0], views[1], self.step,
                                               self.pic_cfg)

        total, terms = self.loss.dual_loss(base.output, base.hvi_output,
                                           mem.output, mem.hvi_output,
                                           high, gt_hvi, consistency)
        if not torch.isfinite(total):
            raise NonFiniteLossError(
                f"non-finite loss at step {self.step}; last good checkpoint "
                f"kept at {self.checkpoint_path}")
        total.backward()
        self.optimizer.step()
        self.step += 1

        row = {"step": self.step, "lr": lr, "beta_t": beta_t}
        row.update({k: float(v.detach() if torch.is_tensor(v) else v)
                    for k, v in terms.items()})
        row["total"] = float(total.detach())
        row["wall_time"] = time.perf_counter() - t0
        return row

    @torch.no_grad()
    def validate(self) -> dict:
        was_training = self.model.training
        self.model.eval()
        psnrs, ssims = [], []
        for _, low_path, high_path in self.val_pairs:
            low = to_tensor(load_image(low_path)).unsqueeze(0).to(self.device)
            high = to_tensor(load_image(high_path))
            out = self.model.enhance(low)[0].cpu()
            psnrs.append(psnr(out, high))
            ssims.append(ssim(out, high))
        if was_training:
            self.model.train()
        return {"psnr_db": sum(psnrs) / len(psnrs),
                "ssim": sum(ssims) / len(ssims)}
