import numpy as np
import pytest
from numpy.testing import assert_allclose

from dpmn.diffcore.node import ShapeError, backward
from dpmn.diffcore.module import Parameter
from dpmn.losses_metrics import (
    EmptyEvaluationError,
    aggregate_records,
    branch_loss,
    image_grad,
    img_loss,
    psnr,
    read_metrics_csv,
    recognition_accuracy,
    ssim,
    total_loss,
    write_metrics_csv,
)
from dpmn.losses_metrics.metrics import PSNR_CAP_DB, gaussian_window
from dpmn.priors.label import TextLabel
from dpmn.schemas.config import LossWeights
from dpmn.schemas.records import EvalRecord, Tier


def test_psnr_analytic_values():
    zeros = np.zeros((4, 4, 3))
    assert abs(psnr(zeros, np.ones((4, 4, 3)))) < 1e-12
    assert abs(psnr(zeros, np.full((4, 4, 3), 0.1)) - 20.0) < 1e-12
    assert psnr(zeros, zeros) == PSNR_CAP_DB


def _naive_ssim_channel(a, b):
    window = gaussian_window()
    r = window.shape[0] // 2
    pa, pb = np.pad(a, r, mode="reflect"), np.pad(b, r, mode="reflect")
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            wa = pa[i:i + 2 * r + 1, j:j + 2 * r + 1]
            wb = pb[i:i + 2 * r + 1, j:j + 2 * r + 1]
            mu_a, mu_b = (window * wa).sum(), (window * wb).sum()
            var_a = (window * wa * wa).sum() - mu_a ** 2
            var_b = (window * wb * wb).sum() - mu_b ** 2
            cov = (window * wa * wb).sum() - mu_a * mu_b
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return total / a.size


@pytest.mark.parametrize("seed", range(50))
def test_metrics_match_direct_loops(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(12, 14, 3))
    b = np.clip(a + rng.normal(0, 0.1, size=a.shape), 0, 1)
    expected = np.mean([_naive_ssim_channel(a[..., c], b[..., c]) for c in range(3)])
    assert_allclose(ssim(a, b), expected, atol=1e-9)
    squared = 0.0
    for value_a, value_b in zip(a.ravel(), b.ravel()):
        squared += (value_a - value_b) ** 2
    assert_allclose(psnr(a, b), 10 * np.log10(a.size / squared), atol=1e-9)
    assert_allclose(ssim(a, a), 1.0, atol=1e-12)


def test_metrics_reject_mismatched_shapes():
    with pytest.raises(ShapeError):
        psnr(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_image_grad_is_zero_on_trailing_border():
    image = np.arange(12.0).reshape(3, 4, 1)
    g = image_grad(image).values
    assert g.shape == (3, 4, 1, 2)
    assert np.all(g[:, :3, 0, 0] == 1.0)
    assert np.all(g[:, 3, 0, 0] == 0.0)
    assert np.all(g[:2, :, 0, 1] == 4.0)
    assert np.all(g[2, :, 0, 1] == 0.0)


def test_img_loss_value_on_a_ramp():
    target = np.tile(np.arange(4.0) * 0.1, (3, 1))[..., None]
    loss = img_loss(np.zeros_like(target), target, LossWeights(lambda_p=1.0, lambda_g=2.0))
    # pixel 0.035, profile 0.9 / 24
    assert_allclose(float(loss.values), 0.035 + 2 * 0.0375, atol=1e-12)
    assert float(img_loss(target, target).values) == 0.0


def test_img_loss_gradient_reaches_prediction():
    p = Parameter.create("p", np.full((2, 3, 1), 0.5))
    backward(img_loss(p.node, np.zeros((2, 3, 1))))
    assert np.all(p.grad > 0)


def test_branch_and_total_losses():
    target = np.zeros((2, 2, 3))
    images = [np.full((2, 2, 3), 0.1), np.full((2, 2, 3), 0.2)]
    assert_allclose(float(branch_loss(images, target).values), 0.01 + 0.04, atol=1e-12)
    with pytest.raises(ShapeError):
        branch_loss([], target)

    weights = LossWeights(lambda_cmm=2.0, lambda_graphic=3.0, lambda_structure=5.0)
    assert float(total_loss(1.0, 1.0, 1.0, weights).values) == 10.0
    assert float(total_loss(1.0, None, 1.0, weights).values) == 7.0


def _record(i: int, tier: Tier, psnr_db: float, hit: bool) -> EvalRecord:
    return EvalRecord(f"s{i}", tier, psnr_db, 0.5, TextLabel("A"), hit)


def test_aggregate_rows_per_tier_and_average():
    records = [
        _record(0, Tier.EASY, 30.0, True),
        _record(1, Tier.EASY, 20.0, False),
        _record(2, Tier.HARD, 10.0, True),
    ]
    rows = aggregate_records(records, "r", "test", "psn", None, "abc")
    assert [r.tier for r in rows] == ["easy", "hard", "average"]
    assert rows[0].psnr == 25.0 and rows[0].accuracy == 0.5
    assert rows[-1].n_samples == 3
    assert_allclose(rows[-1].accuracy, 2 / 3)
    with pytest.raises(EmptyEvaluationError):
        aggregate_records([], "r", "test", "psn", None, "abc")


def test_metrics_csv_round_trip(tmp_path):
    records = [_record(0, Tier.MEDIUM, 21.5, True)]
    rows = aggregate_records(records, "r", "test", "dpmn@0.5", 0.5, "abc")
    rows += aggregate_records(records, "r", "test", "bicubic", None, "abc")
    path = write_metrics_csv(tmp_path / "m.csv", rows[:2])
    write_metrics_csv(path, rows[2:], append=True)
    assert path.read_text().count("run_id") == 1
    assert read_metrics_csv(path) == rows


def test_recognition_accuracy_is_case_insensitive():
    assert recognition_accuracy(["ab1", "X"], ["AB1", "Y"]) == 0.5
    with pytest.raises(EmptyEvaluationError):
        recognition_accuracy([], [])
