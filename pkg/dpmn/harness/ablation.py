# dpmn/harness/ablation.py
'''Named ablation grids: one trained and evaluated DPMN per cell, resumable by config hash'''

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from dpmn.errors import DPMNError
from dpmn.harness.evaluation import evaluate
from dpmn.harness.training import train_dpmn, train_psn, write_loss_curve
from dpmn.losses_metrics.metrics import write_metrics_csv
from dpmn.netblocks.persistence import load_psn, read_manifest
from dpmn.observability.tracing import tracer
from dpmn.schemas.config import (
    ConfigError,
    ConfigHashMismatchError,
    RunConfig,
    config_hash,
    merge_nested,
    nest,
)
from dpmn.schemas.records import MetricsRow, Split
from dpmn.synthdata.dataset import load_dataset

logger = logging.getLogger(__name__)

CELLS_DIR = "cells"


@dataclass(frozen=True)
class AblationCell:
    suite: str
    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)

    @property
    def cell_id(self) -> str:
        return f"{self.suite}.{self.name}"

    def config(self, base: RunConfig) -> RunConfig:
        data = merge_nested(base.model_dump(), nest(self.overrides))
        try:
            return RunConfig(**data)
        except ValueError as e:
            raise ConfigError(f"ablation cell {self.cell_id} is not a valid run: {e}") from e


def _cells(suite: str, variants: list[tuple[str, dict[str, Any]]]) -> list[AblationCell]:
    return [AblationCell(suite, name, overrides) for name, overrides in variants]


SUITES: dict[str, list[AblationCell]] = {
    "priors": _cells("priors", [
        ("mask", {"single_branch": "mask"}),
        ("graphic", {"single_branch": "graphic"}),
        ("concat", {"single_branch": "concat"}),
        ("dual", {}),
        ("dual_oracle", {"oracle_priors": True}),
    ]),
    "strategy": _cells("strategy", [
        (strategy, {"train_strategy": strategy, "ablation": True})
        for strategy in ("frozen", "finetune", "standalone")
    ]),
    "pgrm_count": _cells("pgrm_count", [(f"n{n}", {"net.n_pgrm": n}) for n in range(1, 6)]),
    "window": _cells("window", [
        *((f"fixed{w}", {"fixed_window": w}) for w in (2, 4, 8)),
        ("dynamic", {}),
    ]),
    "cmm": _cells("cmm", [
        (variant, {"cmm_variant": variant}) for variant in ("full", "no_ca", "unet_like", "tsrn_like")
    ]),
}


def suite_cells(suite: str) -> list[AblationCell]:
    if suite == "all":
        return [cell for cells in SUITES.values() for cell in cells]
    if suite not in SUITES:
        raise ConfigError(f"unknown ablation suite {suite!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[suite]


def _row_from_json(payload: Mapping[str, Any]) -> MetricsRow:
    return MetricsRow(**payload)


def load_cell(path: Path, expected_hash: str) -> list[MetricsRow] | None:
    """Rows of a finished cell, None when the cell has not run yet."""
    if not path.exists():
        return None
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("config_hash") != expected_hash:
        raise ConfigHashMismatchError(
            f"{path} was produced by config {payload.get('config_hash')}, this run is {expected_hash}; "
            f"use a fresh --out directory"
        )
    return [_row_from_json(row) for row in payload["rows"]]


def save_cell(path: Path, cell: AblationCell, digest: str, rows: list[MetricsRow], wall_clock_s: float) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "cell_id": cell.cell_id,
        "config_hash": digest,
        "overrides": dict(cell.overrides),
        "wall_clock_s": wall_clock_s,
        "rows": [asdict(row) for row in rows],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def shared_psn(base: RunConfig, out_dir: Path, psn_path: str | Path | None) -> Path:
    """The PSN every cell starts from; trained once per grid when none is supplied."""
    if psn_path is not None:
        return Path(psn_path)
    path = out_dir / "psn.ckpt"
    digest = config_hash(base)
    if path.exists():
        stored = str(read_manifest(path).get("config_hash"))
        if stored != digest:
            raise ConfigHashMismatchError(f"{path} was trained under config {stored}, this grid is {digest}")
        logger.info(f"reusing shared TinyPSN {path}")
        return path
    train_psn(base, path)
    return path


def best_dpmn_row(rows: list[MetricsRow]) -> MetricsRow:
    """Average row of the α with the highest PSNR."""
    candidates = [r for r in rows if r.tier == "average" and r.system.startswith("dpmn")]
    if not candidates:
        raise DPMNError("cell evaluation produced no DPMN rows")
    return max(candidates, key=lambda r: r.psnr)


def run_cell(cell: AblationCell, base: RunConfig, psn_path: Path, out_dir: Path, workers: int) -> list[MetricsRow]:
    config = cell.config(base)
    digest = config_hash(config)
    record_path = out_dir / CELLS_DIR / f"{cell.cell_id}.json"
    done = load_cell(record_path, digest)
    if done is not None:
        logger.info(f"cell {cell.cell_id} already complete ({digest}), skipping")
        return done

    started = time.perf_counter()
    cell_dir = out_dir / CELLS_DIR / cell.cell_id
    with tracer.start_as_current_span("ablation.cell") as span:
        span.set_attribute("cell", cell.cell_id)
        logger.info(f"cell {cell.cell_id}: training ({digest})")
        model, report = train_dpmn(config, psn_path, cell_dir)
        write_loss_curve(cell_dir / "loss_curve.csv", report)
        if config.train_strategy == "standalone":
            psn = None
        elif config.train_strategy == "finetune":
            psn = load_psn(cell_dir / "psn_finetuned.ckpt")
        else:
            psn = load_psn(psn_path)
        samples = load_dataset(config.dataset, Split.TEST, limit=config.eval_limit)
        rows = evaluate(config, samples, psn, model, out_dir=cell_dir, run_id=cell.cell_id, workers=workers)
    save_cell(record_path, cell, digest, rows, time.perf_counter() - started)
    return rows


def run_ablation(
        suite: str,
        base: RunConfig,
        out_dir: str | Path,
        psn_path: str | Path | None = None,
        workers: int = 1,
) -> Path:
    """Run every cell of ``suite`` and write ``ablation_<suite>.csv`` with one row per cell."""
    cells = suite_cells(suite)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shared = shared_psn(base, out_dir, psn_path)
    table: list[MetricsRow] = []
    for i, cell in enumerate(cells, start=1):
        logger.info(f"ablation {suite}: cell {i}/{len(cells)} {cell.cell_id}")
        best = best_dpmn_row(run_cell(cell, base, shared, out_dir, workers))
        table.append(MetricsRow(**{**asdict(best), "run_id": suite, "system": cell.cell_id}))
    path = write_metrics_csv(out_dir / f"ablation_{suite}.csv", table)
    logger.info(f"wrote {path} ({len(table)} cells)")
    return path
