# dpmn/losses_metrics/metrics.py
'''PSNR, SSIM, recognition accuracy and the metrics CSV'''

import csv
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import correlate

from dpmn.diffcore.node import ShapeError
from dpmn.errors import DPMNError
from dpmn.priors.label import TextLabel
from dpmn.schemas.records import TIERS, EvalRecord, MetricsRow

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
METRICS_HEADER = [
    "run_id", "split", "tier", "psnr", "ssim", "accuracy", "n_samples", "system", "alpha", "config_hash",
]


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("metric", a.shape, b.shape)
    return a, b


def psnr(a, b) -> float:
    """10·log10(1/MSE) over all channels jointly; identical images give the 100 dB cap."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - size // 2
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM of two single-channel images, mirrored borders."""
    window = gaussian_window()

    def blur(x):
        return correlate(x, window, mode="mirror")

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return numerator / denominator


def ssim(a, b) -> float:
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    return float(np.mean([ssim_map(a[..., c], b[..., c]).mean() for c in range(a.shape[2])]))


def recognition_accuracy(predictions: Sequence[TextLabel | str], labels: Sequence[TextLabel | str]) -> float:
    """Case-insensitive exact-match rate."""
    if len(predictions) != len(labels):
        raise ShapeError("recognition_accuracy", len(predictions), len(labels))
    if not labels:
        raise EmptyEvaluationError("recognition accuracy over an empty set")
    hits = sum(str(p).upper() == str(t).upper() for p, t in zip(predictions, labels))
    return hits / len(labels)


def aggregate_records(
        records: Sequence[EvalRecord],
        run_id: str,
        split: str,
        system: str,
        alpha: float | None,
        config_hash: str,
) -> list[MetricsRow]:
    """One row per tier present plus the sample-weighted average row."""
    if not records:
        raise EmptyEvaluationError(f"no records to aggregate for {system}")

    def _row(tier: str, group: Sequence[EvalRecord]) -> MetricsRow:
        return MetricsRow(
            run_id=run_id,
            split=split,
            tier=tier,
            psnr=float(np.mean([r.psnr_db for r in group])),
            ssim=float(np.mean([r.ssim for r in group])),
            accuracy=sum(r.exact_match for r in group) / len(group),
            n_samples=len(group),
            system=system,
            alpha=alpha,
            config_hash=config_hash,
        )

    rows = []
    for tier in TIERS:
        group = [r for r in records if r.tier == tier]
        if group:
            rows.append(_row(str(tier), group))
    rows.append(_row("average", records))
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: str | Path, rows: Iterable[MetricsRow], append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not (append and path.exists())
    with path.open("w" if new_file else "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if new_file:
            writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([_cell(getattr(row, column)) for column in METRICS_HEADER])
    return path


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return [
            MetricsRow(
                run_id=r["run_id"],
                split=r["split"],
                tier=r["tier"],
                psnr=float(r["psnr"]),
                ssim=float(r["ssim"]),
                accuracy=float(r["accuracy"]),
                n_samples=int(r["n_samples"]),
                system=r["system"],
                alpha=float(r["alpha"]) if r["alpha"] else None,
                config_hash=r["config_hash"],
            )
            for r in reader
        ]


class EmptyEvaluationError(DPMNError):
    pass
