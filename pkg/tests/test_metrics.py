import json
import math

import pytest
import torch

from interlight.data import save_image
from interlight.metrics import (
    MetricReport,
    PSNR_CAP_DB,
    evaluate_dataset,
    luma,
    psnr,
    ssim,
)


class TestPsnr:

    def test_identical_hits_cap(self):
        x = torch.rand(3, 16, 16)
        assert psnr(x, x) == PSNR_CAP_DB

    def test_constant_offset_is_20db(self):
        a = torch.rand(3, 32, 32, dtype=torch.float64) * 0.8
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_unit_mse_is_zero_db(self):
        a = torch.zeros(3, 8, 8)
        b = torch.ones(3, 8, 8)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_tiny_error_capped(self):
        a = torch.rand(3, 8, 8, dtype=torch.float64)
        b = a + 1e-9
        assert psnr(a, b) == PSNR_CAP_DB

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            psnr(torch.rand(3, 8, 8), torch.rand(3, 8, 9))

    def test_noise_monotonicity(self):
        gen = torch.Generator().manual_seed(0)
        a = torch.rand(3, 64, 64, generator=gen, dtype=torch.float64) * 0.5 + 0.25
        noise = torch.randn(3, 64, 64, generator=gen, dtype=torch.float64)
        values = [psnr(a, (a + sigma * noise).clamp(0, 1))
                  for sigma in (0.01, 0.05, 0.1)]
        assert values[0] > values[1] > values[2]

    def test_luma_space_ignores_chroma_error(self):
        a = torch.full((3, 16, 16), 0.5, dtype=torch.float64)
        # perturbation orthogonal to BT.601 luma: 0.299*dR + 0.587*dG = 0
        b = a.clone()
        b[0] += 0.587 * 0.05
        b[1] -= 0.299 * 0.05
        assert psnr(a, b, metric_space="y") == PSNR_CAP_DB
        assert psnr(a, b, metric_space="rgb") < 40

    def test_luma_weights(self):
        img = torch.tensor([0.2, 0.4, 0.8]).view(3, 1, 1).expand(3, 4, 4)
        expected = 0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.8
        assert torch.allclose(luma(img), torch.full((1, 4, 4), expected),
                              atol=1e-6)

    def test_unknown_space_raises(self):
        with pytest.raises(ValueError):
            psnr(torch.rand(3, 4, 4), torch.rand(3, 4, 4), metric_space="lab")


class TestSsimMetric:

    def test_identical_is_one(self):
        x = torch.rand(3, 32, 32)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_constant_zero_vs_one_closed_form(self):
        a = torch.zeros(3, 16, 16)
        b = torch.ones(3, 16, 16)
        c1, c2 = 0.01 ** 2, 0.03 ** 2
        # mu_a=0, mu_b=1, variances and covariance all zero
        expected = ((2 * 0 * 1 + c1) * (0 + c2)) / ((0 + 1 + c1) * (0 + c2))
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)

    def test_symmetry(self):
        a, b = torch.rand(3, 24, 24), torch.rand(3, 24, 24)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_blur_scores_below_one(self):
        x = torch.rand(1, 3, 48, 48)
        blurred = torch.nn.functional.avg_pool2d(x, 7, stride=1, padding=3)
        assert ssim(x, blurred) < 1.0

    def test_bounded(self):
        gen = torch.Generator().manual_seed(1)
        for _ in range(5):
            a = torch.rand(3, 16, 16, generator=gen)
            b = torch.rand(3, 16, 16, generator=gen)
            v = ssim(a, b)
            assert -1.0 - 1e-6 <= v <= 1.0 + 1e-6


class _IdentityModel:

    def enhance(self, x):
        return x


class TestEvaluateDataset:

    @staticmethod
    def _write_pairs(root, n=3, identical=True):
        gen = torch.Generator().manual_seed(0)
        for i in range(n):
            img = torch.rand(3, 16, 16, generator=gen)
            save_image(root / "high" / f"{i}.png", img)
            save_image(root / "low" / f"{i}.png",
                       img if identical else img * 0.3)

    def test_identity_model_on_matched_pairs_hits_cap(self, tmp_path):
        self._write_pairs(tmp_path, identical=True)
        report = evaluate_dataset(_IdentityModel(), tmp_path)
        assert report.aggregate["count"] == 3
        assert report.aggregate["mean_psnr"] == PSNR_CAP_DB
        assert report.aggregate["mean_ssim"] == pytest.approx(1.0, abs=1e-9)

    def test_rows_sorted_and_aggregate_recomputes(self, tmp_path):
        self._write_pairs(tmp_path, identical=False)
        report = evaluate_dataset(_IdentityModel(), tmp_path)
        names = [r["name"] for r in report.per_image]
        assert names == sorted(names)
        mean_psnr = sum(r["psnr_db"] for r in report.per_image) / len(names)
        assert report.aggregate["mean_psnr"] == pytest.approx(mean_psnr)

    def test_missing_pairs_listed_and_excluded(self, tmp_path):
        self._write_pairs(tmp_path, n=2)
        save_image(tmp_path / "low" / "orphan.png", torch.rand(3, 8, 8))
        report = evaluate_dataset(_IdentityModel(), tmp_path)
        assert report.missing == ["orphan.png"]
        assert report.aggregate["count"] == 2
        assert any("unmatched" in w for w in report.warnings)

    def test_empty_dataset_warns(self, tmp_path):
        (tmp_path / "low").mkdir()
        (tmp_path / "high").mkdir()
        report = evaluate_dataset(_IdentityModel(), tmp_path)
        assert report.aggregate["count"] == 0
        assert report.warnings

    def test_capture_outputs(self, tmp_path):
        self._write_pairs(tmp_path, n=2)
        report, outputs = evaluate_dataset(_IdentityModel(), tmp_path,
                                           capture_outputs=True)
        assert set(outputs) == {"0.png", "1.png"}
        assert outputs["0.png"].shape == (3, 16, 16)

    def test_config_hash_recorded(self, tmp_path):
        self._write_pairs(tmp_path, n=1)
        report = evaluate_dataset(_IdentityModel(), tmp_path,
                                  config_hash="abc123")
        assert report.to_dict()["config_hash"] == "abc123"


class TestReportSerialization:

    def _report(self):
        per_image = [{"name": "a.png", "psnr_db": 31.25, "ssim": 0.912345},
                     {"name": "b.png", "psnr_db": 28.5, "ssim": 0.87}]
        return MetricReport(
            per_image=per_image,
            aggregate={"mean_psnr": 29.875, "mean_ssim": 0.8911725, "count": 2},
            missing=["c.png"], warnings=["1 unmatched file(s) excluded"],
            config_hash="deadbeef")

    def test_json_round_trip_lossless(self, tmp_path):
        report = self._report()
        report.save(tmp_path / "r.json")
        back = MetricReport.load(tmp_path / "r.json")
        assert back.to_dict() == report.to_dict()

    def test_schema_keys(self, tmp_path):
        report = self._report()
        report.save(tmp_path / "r.json")
        raw = json.loads((tmp_path / "r.json").read_text())
        for key in ("version", "config_hash", "per_image", "aggregate"):
            assert key in raw
        assert raw["version"] == 1
