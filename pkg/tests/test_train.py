import json
import math

import pytest
import torch

from interlight.checkpoint import load_checkpoint
from interlight.config import Config
from interlight.data import load_image, make_toy_dataset, to_tensor
from interlight.train import NonFiniteLossError, Trainer, cosine_lr


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy") / "data"
    make_toy_dataset(root, n=6, seed=7, size=48)
    return root


def tiny_config(toy_root, out_dir, epochs=2, **overrides):
    cfg = Config()
    cfg.train.data_root = str(toy_root)
    cfg.train.out_dir = str(out_dir)
    cfg.train.epochs = epochs
    cfg.train.batch_size = 2
    cfg.train.crop_size = 40
    cfg.train.eval_every_epochs = 1
    cfg.model.channels = [8, 8, 16, 32]
    cfg.model.num_atoms = 4
    cfg.model.prompt_dim = 16
    cfg.model.memory_entries = 4
    for key, value in overrides.items():
        section, name = key.split(".")
        setattr(getattr(cfg, section), name, value)
    return cfg


class TestCosineLr:

    def test_endpoints(self):
        assert cosine_lr(0, 100, 2e-4) == 2e-4
        assert cosine_lr(99, 100, 2e-4) <= 1e-6
        assert cosine_lr(50, 100, 2e-4) < 2e-4

    def test_midpoint_halves(self):
        # even symmetric schedule: the middle of 0..T-1 sits at lr0/2
        assert cosine_lr(50, 101, 2e-4) == pytest.approx(1e-4)

    def test_monotone_nonincreasing(self):
        values = [cosine_lr(s, 37, 1e-3) for s in range(37)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_degenerate_lengths(self):
        assert cosine_lr(0, 1, 5e-4) == 5e-4
        assert cosine_lr(12, 10, 1e-3) == 0.0


def read_log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestTrainer:

    def test_short_run_artifacts_and_log_schema(self, toy_root, tmp_path):
        cfg = tiny_config(toy_root, tmp_path / "run", epochs=2)
        trainer = Trainer(cfg)
        ckpt = trainer.train()
        assert ckpt.exists()
        assert (tmp_path / "run" / "config.yaml").exists()
        assert (tmp_path / "run" / "loss_curves.png").exists()

        rows = read_log(trainer.log_path)
        # 5 train pairs, batch 2 -> 3 steps per epoch
        assert len(rows) == trainer.total_steps == 6
        assert [r["step"] for r in rows] == list(range(1, 7))
        required = {"step", "lr", "beta_t", "wall_time", "total",
                    "mem_consistency", "base_total", "mem_total",
                    "base_l1_rgb", "mem_l1_rgb", "base_ssim_rgb",
                    "base_edge_rgb", "base_l1_hvi"}
        assert required <= set(rows[0])
        assert all(math.isfinite(r["total"]) for r in rows)

        # cosine endpoints, verbatim config lr at step 0
        assert rows[0]["lr"] == cfg.train.lr
        assert rows[-1]["lr"] <= 1e-6
        # consistency ramp starts at beta0 and decays
        assert rows[0]["beta_t"] == pytest.approx(cfg.pic.beta0)
        assert rows[-1]["beta_t"] < rows[0]["beta_t"]

        # validation ran every epoch and landed in the checkpoint header
        _, _, header = load_checkpoint(ckpt)
        assert header["step"] == 6
        assert [m["step"] for m in header["metric_history"]] == [3, 6]
        assert all(set(m) == {"step", "psnr_db", "ssim"}
                   for m in header["metric_history"])

    def test_bit_reproducible_trace(self, toy_root, tmp_path):
        traces = []
        for name in ("a", "b"):
            cfg = tiny_config(toy_root, tmp_path / name, epochs=2)
            trainer = Trainer(cfg)
            trainer.train()
            traces.append([r["total"] for r in read_log(trainer.log_path)])
        assert traces[0] == traces[1]

    def test_seed_changes_trace(self, toy_root, tmp_path):
        totals = []
        for seed in (0, 1):
            cfg = tiny_config(toy_root, tmp_path / f"s{seed}", epochs=1,
                              **{"train.seed": seed})
            trainer = Trainer(cfg)
            trainer.train()
            totals.append([r["total"] for r in read_log(trainer.log_path)])
        assert totals[0] != totals[1]

    def test_checkpoint_round_trip_preserves_outputs(self, toy_root, tmp_path):
        cfg = tiny_config(toy_root, tmp_path / "run", epochs=1)
        trainer = Trainer(cfg)
        ckpt = trainer.train()
        restored, restored_cfg, _ = load_checkpoint(ckpt)
        assert restored_cfg == cfg

        name, low_path, _ = trainer.val_pairs[0]
        low = to_tensor(load_image(low_path)).unsqueeze(0)
        trainer.model.eval()
        with torch.no_grad():
            want = trainer.model.enhance(low)
            got = restored.enhance(low)
        assert torch.allclose(want, got, atol=1e-6)

    def test_nan_loss_aborts_and_keeps_checkpoint(self, toy_root, tmp_path):
        cfg = tiny_config(toy_root, tmp_path / "run", epochs=1)
        trainer = Trainer(cfg)

        def poisoned(*args, **kwargs):
            return torch.tensor(float("nan"), requires_grad=True), {}

        trainer.loss.dual_loss = poisoned
        with pytest.raises(NonFiniteLossError, match="non-finite loss"):
            trainer.train()
        # the pre-training save is still on disk and loadable
        model, _, header = load_checkpoint(trainer.checkpoint_path)
        assert header["step"] == 0
        assert sum(p.numel() for p in model.parameters()) > 0

    def test_loss_decreases(self, toy_root, tmp_path):
        cfg = tiny_config(toy_root, tmp_path / "run", epochs=12,
                          **{"train.eval_every_epochs": 100})
        trainer = Trainer(cfg)
        trainer.train()
        totals = [r["total"] for r in read_log(trainer.log_path)]
        third = len(totals) // 3
        head = sum(totals[:third]) / third
        tail = sum(totals[-third:]) / third
        assert tail < head

    def test_icde_off_skips_augment_rng(self, toy_root, tmp_path):
        # with the consistency branch disabled the augment stream is untouched
        cfg = tiny_config(toy_root, tmp_path / "run", epochs=1,
                          **{"model.use_icde": False})
        trainer = Trainer(cfg)
        state_before = trainer.aug_generator.get_state()
        trainer.train()
        assert torch.equal(trainer.aug_generator.get_state(), state_before)
        rows = read_log(trainer.log_path)
        assert all(r["beta_t"] == 0.0 for r in rows)
        assert all(r["mem_consistency"] == 0.0 for r in rows)
