# dpmn/harness/training.py
'''Mini-batch training loops for TinyPSN and the DPMN'''

import hashlib
import logging
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module, Parameter
from dpmn.diffcore.node import DiffNode, backward, precision
from dpmn.diffcore.optim import Adam
from dpmn.diffcore.rng import Rng
from dpmn.errors import DPMNError
from dpmn.losses_metrics.losses import branch_loss, cmm_loss, img_loss, total_loss
from dpmn.losses_metrics.metrics import psnr
from dpmn.netblocks.model import DPMN, dpmn_forward
from dpmn.netblocks.persistence import load_psn, save_model
from dpmn.netblocks.psn import TinyPSN
from dpmn.observability.tracing import current_loss, step_latency, steps_taken, tracer
from dpmn.safety.divergence_guard import DivergenceGuard
from dpmn.schemas.config import RunConfig, config_hash
from dpmn.schemas.records import RunReport, SamplePair, Split
from dpmn.synthdata.dataset import load_dataset

logger = logging.getLogger(__name__)

HELDOUT_SAMPLES = 24


def state_checksum(module: Module) -> str:
    digest = hashlib.sha256()
    for name, values in module.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(values).tobytes())
    return digest.hexdigest()


def fit(
        params: Sequence[Parameter],
        sample_loss: Callable[[SamplePair], DiffNode],
        samples: Sequence[SamplePair],
        epochs: int,
        batch: int,
        lr: float,
        rng: np.random.Generator,
        run: str,
        report: RunReport,
        on_epoch: Callable[[int], float | None] | None = None,
) -> RunReport:
    """Shuffled mini-batches; per-sample backward passes accumulate the batch-mean gradient."""
    optimizer = Adam(params, lr=lr)
    guard = DivergenceGuard(run=run)
    for epoch in range(epochs):
        with tracer.start_as_current_span(f"{run}.epoch") as span:
            span.set_attribute("epoch", epoch)
            started = time.perf_counter()
            order = rng.permutation(len(samples))
            epoch_losses = []
            for start in range(0, len(samples), batch):
                chunk = [samples[i] for i in order[start:start + batch]]
                with step_latency.labels(run).time():
                    optimizer.zero_grad()
                    loss_value = 0.0
                    for sample in chunk:
                        loss = ops.mul(sample_loss(sample), 1.0 / len(chunk))
                        backward(loss)
                        loss_value += float(loss.values)
                    if guard.check(loss_value, optimizer.grads_finite()):
                        optimizer.step()
                        steps_taken.labels(run).inc()
                    else:
                        optimizer.zero_grad()
                current_loss.labels(run).set(loss_value)
                report.loss_curve.append(loss_value)
                epoch_losses.append(loss_value)
                logger.debug(f"{run} epoch {epoch} step {start // batch}: loss {loss_value:.6f}")
            mean_loss = float(np.mean(epoch_losses))
            report.epoch_losses.append(mean_loss)
            heldout = on_epoch(epoch) if on_epoch else None
            if heldout is not None:
                report.epoch_psnr.append(heldout)
            span.set_attribute("loss", mean_loss)
            logger.info(
                f"{run} epoch {epoch + 1}/{epochs}: loss {mean_loss:.5f}"
                + (f", held-out PSNR {heldout:.3f} dB" if heldout is not None else "")
                + f", {time.perf_counter() - started:.1f}s"
            )
    report.skipped_steps = guard.skipped_total
    return report


def _require_dataset(config: RunConfig) -> Path:
    if config.dataset is None:
        raise DPMNError("a dataset directory is required (--dataset)")
    return config.dataset


def _heldout(config: RunConfig) -> list[SamplePair]:
    limit = min(config.eval_limit or HELDOUT_SAMPLES, HELDOUT_SAMPLES)
    return load_dataset(_require_dataset(config), Split.TEST, limit=limit)


def train_psn(config: RunConfig, out_path: str | Path) -> tuple[TinyPSN, RunReport]:
    """Train TinyPSN with img_loss on (LR, HR) pairs; the checkpoint is written marked frozen."""
    net = config.effective_net()
    report = RunReport(config_hash=config_hash(config))
    started = time.perf_counter()
    with precision(config.precision):
        samples = load_dataset(_require_dataset(config), Split.TRAIN, limit=config.train_limit)
        heldout = _heldout(config)
        psn = TinyPSN(Rng(config.seed).child("psn").generator(), width=net.psn_width)

        def sample_loss(sample: SamplePair) -> DiffNode:
            return img_loss(psn(sample.lr), sample.hr, config.weights)

        def on_epoch(_: int) -> float:
            return float(np.mean([psnr(psn(s.lr).values, s.hr) for s in heldout]))

        logger.info(f"training TinyPSN on {len(samples)} pairs for {config.psn_epochs} epochs")
        fit(psn.parameters(), sample_loss, samples, config.psn_epochs, config.batch, config.lr,
            Rng(config.seed).child("psn-order").generator(), "train-psn", report, on_epoch)
        psn.freeze()
        path = save_model(out_path, psn, net, "psn", frozen=True, config_hash=report.config_hash)
    report.checkpoints.append(path)
    report.wall_clock_s = time.perf_counter() - started
    return psn, report


def dpmn_sample_loss(model: DPMN, psn: TinyPSN | None, config: RunConfig) -> Callable[[SamplePair], DiffNode]:
    def sample_loss(sample: SamplePair) -> DiffNode:
        result = dpmn_forward(
            model, sample.lr, psn,
            strategy=config.train_strategy,
            hr=sample.hr if config.oracle_priors else None,
        )
        graphic = result.branches.get("graphic")
        structure = result.branches.get("structure") or result.branches.get("concat")
        return total_loss(
            cmm_loss(result.i_m, sample.hr),
            branch_loss(graphic, sample.hr, config.weights) if graphic else None,
            branch_loss(structure, sample.hr, config.weights) if structure else None,
            config.weights,
        )

    return sample_loss


def train_dpmn(config: RunConfig, psn_path: str | Path | None, out_dir: str | Path) -> tuple[DPMN, RunReport]:
    """Optimize the DPMN with the total objective; the frozen PSN must come out bitwise unchanged."""
    net = config.effective_net()
    out_dir = Path(out_dir)
    report = RunReport(config_hash=config_hash(config))
    started = time.perf_counter()
    with precision(config.precision):
        samples = load_dataset(_require_dataset(config), Split.TRAIN, limit=config.train_limit)
        heldout = _heldout(config)
        psn = None
        if config.train_strategy != "standalone":
            if psn_path is None:
                raise DPMNError(f"train_strategy={config.train_strategy} needs a PSN checkpoint (--psn)")
            psn = load_psn(psn_path, freeze=config.train_strategy == "frozen")
        before = state_checksum(psn) if psn is not None else None
        model = DPMN(net, Rng(config.seed).child("dpmn"), single_branch=config.single_branch)
        params = model.parameters()
        if config.train_strategy == "finetune":
            params = params + psn.parameters()
        sample_loss = dpmn_sample_loss(model, psn, config)

        def on_epoch(_: int) -> float:
            scores = []
            for s in heldout:
                result = dpmn_forward(model, s.lr, psn, strategy=config.train_strategy,
                                      hr=s.hr if config.oracle_priors else None)
                scores.append(psnr(result.i_out.values, s.hr))
            return float(np.mean(scores))

        logger.info(
            f"training DPMN ({model.parameter_count()} weights, strategy={config.train_strategy}) "
            f"on {len(samples)} pairs for {config.epochs} epochs"
        )
        fit(params, sample_loss, samples, config.epochs, config.batch, config.lr,
            Rng(config.seed).child("dpmn-order").generator(), "train-dpmn", report, on_epoch)

        if config.train_strategy == "frozen" and state_checksum(psn) != before:
            raise FrozenContractError("frozen TinyPSN parameters changed during DPMN training")
        path = save_model(
            out_dir / "dpmn.ckpt", model, net, "dpmn",
            single_branch=config.single_branch,
            train_strategy=config.train_strategy,
            oracle_priors=config.oracle_priors,
            config_hash=report.config_hash,
        )
        report.checkpoints.append(path)
        if config.train_strategy == "finetune":
            report.checkpoints.append(
                save_model(out_dir / "psn_finetuned.ckpt", psn, net, "psn", frozen=False)
            )
    report.wall_clock_s = time.perf_counter() - started
    return model, report


def write_loss_curve(path: str | Path, report: RunReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,loss"] + [f"{i},{v!r}" for i, v in enumerate(report.loss_curve)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class FrozenContractError(DPMNError):
    pass
