# dpmn/harness/evaluation.py
'''Read-only evaluation of bicubic, PSN-only and PSN+DPMN over the test tiers'''

import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dpmn.diffcore.node import precision
from dpmn.losses_metrics.metrics import aggregate_records, psnr, ssim, write_metrics_csv
from dpmn.netblocks.model import DPMN, dpmn_forward, fuse
from dpmn.netblocks.psn import TinyPSN
from dpmn.observability.tracing import samples_evaluated, tracer
from dpmn.priors.recognizer import recognize
from dpmn.schemas.config import RunConfig, config_hash
from dpmn.schemas.records import EvalRecord, MetricsRow, SamplePair, Split
from dpmn.synthdata.degrade import bicubic_upsample
from dpmn.synthdata.ppm import write_ppm

logger = logging.getLogger(__name__)

GRID_SAMPLES = 6
GRID_GAP = 2


@dataclass
class SampleOutputs:
    """Every image one sample contributes to the evaluation."""
    sample: SamplePair
    bicubic: np.ndarray
    psn: np.ndarray | None = None
    i0: np.ndarray | None = None
    i_m: np.ndarray | None = None
    fused: dict[float, np.ndarray] | None = None


def system_name(kind: str, alpha: float | None = None) -> str:
    return kind if alpha is None else f"{kind}@{alpha:g}"


def score(sample: SamplePair, image: np.ndarray) -> EvalRecord:
    recognized = recognize(np.clip(image, 0.0, 1.0)).label
    return EvalRecord(
        sample_id=sample.id,
        tier=sample.tier,
        psnr_db=psnr(image, sample.hr),
        ssim=ssim(image, sample.hr),
        recognized=recognized,
        exact_match=recognized.matches(sample.label),
    )


def run_sample(
        sample: SamplePair,
        psn: TinyPSN | None,
        model: DPMN | None,
        alphas: Sequence[float],
        strategy: str = "frozen",
        oracle_priors: bool = False,
) -> SampleOutputs:
    outputs = SampleOutputs(sample=sample, bicubic=bicubic_upsample(sample.lr))
    if psn is not None:
        outputs.psn = np.asarray(psn(sample.lr).values, dtype=np.float64)
    if model is not None:
        result = dpmn_forward(model, sample.lr, psn, strategy=strategy,
                              hr=sample.hr if oracle_priors else None)
        outputs.i0 = np.asarray(result.i0.values, dtype=np.float64)
        outputs.i_m = np.asarray(result.i_m.values, dtype=np.float64)
        outputs.fused = {a: np.asarray(fuse(result.i_m, result.i0, a).values, dtype=np.float64) for a in alphas}
    return outputs


async def run_samples(samples: Sequence[SamplePair], workers: int, **kwargs) -> list[SampleOutputs]:
    """Inference is pure, so samples run on worker threads; gather keeps input order."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def _one(sample: SamplePair) -> SampleOutputs:
        async with semaphore:
            return await asyncio.to_thread(run_sample, sample, **kwargs)

    return await asyncio.gather(*(_one(s) for s in samples))


def collect_records(outputs: Sequence[SampleOutputs]) -> dict[str, list[EvalRecord]]:
    records: dict[str, list[EvalRecord]] = {}

    def _add(name: str, sample: SamplePair, image: np.ndarray):
        records.setdefault(name, []).append(score(sample, image))
        samples_evaluated.labels(name).inc()

    for out in outputs:
        _add("bicubic", out.sample, out.bicubic)
        if out.psn is not None:
            _add("psn", out.sample, out.psn)
        for alpha, image in (out.fused or {}).items():
            _add(system_name("dpmn", alpha), out.sample, image)
    return records


def image_grid(outputs: Sequence[SampleOutputs], alpha: float) -> np.ndarray:
    """Rows LR (nearest ×2) / I⁰ / I_M / I_OUT / HR, one column per sample."""
    columns = []
    for out in outputs:
        h, w, _ = out.sample.hr.shape
        blank = np.zeros((h, w, 3))
        lr_big = np.repeat(np.repeat(out.sample.lr, 2, axis=0), 2, axis=1)
        fused = (out.fused or {}).get(alpha)
        i0 = out.i0 if out.i0 is not None else out.psn
        rows = [lr_big, i0 if i0 is not None else blank,
                out.i_m if out.i_m is not None else blank,
                fused if fused is not None else blank, out.sample.hr]
        gap = np.ones((GRID_GAP, w, 3))
        parts = []
        for row in rows:
            parts += [row, gap]
        columns.append(np.concatenate(parts[:-1], axis=0))
        columns.append(np.ones((columns[-1].shape[0], GRID_GAP, 3)))
    return np.concatenate(columns[:-1], axis=1)


def evaluate(
        config: RunConfig,
        samples: Sequence[SamplePair],
        psn: TinyPSN | None,
        model: DPMN | None,
        alphas: Sequence[float] | None = None,
        out_dir: str | Path | None = None,
        run_id: str = "eval",
        workers: int = 1,
) -> list[MetricsRow]:
    """PSNR/SSIM/accuracy per tier for every system; optional metrics.csv and grid.ppm under out_dir."""
    alphas = tuple(config.eval_alphas if alphas is None else alphas)
    digest = config_hash(config)
    with tracer.start_as_current_span("eval") as span, precision(config.precision):
        span.set_attribute("samples", len(samples))
        outputs = asyncio.run(run_samples(
            samples, workers, psn=psn, model=model, alphas=alphas,
            strategy=config.train_strategy, oracle_priors=config.oracle_priors,
        ))
        rows: list[MetricsRow] = []
        for name, records in collect_records(outputs).items():
            alpha = float(name.split("@")[1]) if "@" in name else None
            rows += aggregate_records(records, run_id, str(Split.TEST), name, alpha, digest)
    for row in rows:
        if row.tier == "average":
            logger.info(f"{row.system}: PSNR {row.psnr:.3f} dB, SSIM {row.ssim:.4f}, acc {row.accuracy:.3f}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_metrics_csv(out_dir / "metrics.csv", rows)
        grid_alpha = config.net.alpha if config.net.alpha in alphas else alphas[0]
        write_ppm(out_dir / "grid.ppm", image_grid(outputs[:GRID_SAMPLES], grid_alpha))
    return rows
