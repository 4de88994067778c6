# dpmn/synthdata/dataset.py
'''Seeded dataset generation, the on-disk layout and loading it back'''

import asyncio
import csv
import io
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dpmn.diffcore.rng import Rng
from dpmn.errors import DPMNError
from dpmn.priors.label import LABEL_CHARSET, MAX_LABEL_LENGTH, TextLabel
from dpmn.schemas.config import DegradationConfig
from dpmn.schemas.records import TIERS, SamplePair, Split, Tier
from dpmn.synthdata.degrade import degrade_to_lr
from dpmn.synthdata.ppm import quantize, read_ppm, to_float, to_uint8, write_ppm
from dpmn.synthdata.render import render_hr

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ["id", "label", "tier", "split", "seed", "lr_path", "hr_path"]
HR_SHAPE = (32, 128, 3)
LR_SHAPE = (16, 64, 3)
MAX_LABEL_DRAWS = 1_000_000


@dataclass(frozen=True)
class ManifestRow:
    id: str
    label: str
    tier: Tier
    split: Split
    seed: int
    lr_path: str
    hr_path: str

    def as_csv(self) -> list[str]:
        return [self.id, self.label, str(self.tier), str(self.split), str(self.seed), self.lr_path, self.hr_path]


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    rows: tuple[ManifestRow, ...]

    def split(self, split: Split | str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == Split(split)]


def random_label(rng: np.random.Generator) -> str:
    length = int(rng.integers(1, MAX_LABEL_LENGTH + 1))
    return "".join(LABEL_CHARSET[i] for i in rng.integers(0, len(LABEL_CHARSET), size=length))


def draw_labels(master_seed: int, n_train: int, n_test: int) -> tuple[list[str], list[str]]:
    """Test labels first, then train labels rejection-sampled so no test label reappears."""
    rng = Rng(master_seed).child("labels").generator()
    test = [random_label(rng) for _ in range(n_test)]
    excluded = set(test)
    train: list[str] = []
    draws = 0
    while len(train) < n_train:
        draws += 1
        if draws > MAX_LABEL_DRAWS:
            raise DatasetFormatError("could not draw enough train labels disjoint from the test split")
        label = random_label(rng)
        if label not in excluded:
            train.append(label)
    return train, test


def generate_sample(
        sample_id: str,
        label: TextLabel | str,
        tier: Tier | str,
        seed: int,
        config: DegradationConfig,
        split: Split = Split.TRAIN,
) -> SamplePair:
    """Render, quantize to 8 bits, degrade the stored HR, quantize again."""
    label = label if isinstance(label, TextLabel) else TextLabel(label)
    tier = Tier(tier)
    hr = quantize(render_hr(label, seed))
    lr = quantize(degrade_to_lr(hr, config, tier, seed))
    return SamplePair(id=sample_id, label=label, hr=hr, lr=lr, tier=tier, seed=seed, split=split)


def plan_rows(master_seed: int, n_train: int, n_test_per_tier: int) -> list[ManifestRow]:
    train_labels, test_labels = draw_labels(master_seed, n_train, n_test_per_tier * len(TIERS))
    master = Rng(master_seed)
    rows = []
    for index, label in enumerate(train_labels):
        rows.append(_row(master, Split.TRAIN, index, label, TIERS[index % len(TIERS)]))
    for index, label in enumerate(test_labels):
        rows.append(_row(master, Split.TEST, index, label, TIERS[index // n_test_per_tier]))
    return rows


def _row(master: Rng, split: Split, index: int, label: str, tier: Tier) -> ManifestRow:
    sample_id = f"{split}-{index:05d}"
    return ManifestRow(
        id=sample_id,
        label=label,
        tier=tier,
        split=split,
        seed=master.derive_seed("sample", str(split), index),
        lr_path=f"lr/{sample_id}.ppm",
        hr_path=f"hr/{sample_id}.ppm",
    )


def _write_sample(root: Path, row: ManifestRow, config: DegradationConfig) -> None:
    sample = generate_sample(row.id, row.label, row.tier, row.seed, config, row.split)
    write_ppm(root / row.hr_path, to_uint8(sample.hr))
    write_ppm(root / row.lr_path, to_uint8(sample.lr))


def _prepare_dir(out_dir: Path, force: bool) -> None:
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise DatasetExistsError(f"{out_dir} is not empty; pass force to overwrite")
        logger.warning(f"removing existing dataset directory {out_dir}")
        shutil.rmtree(out_dir)
    (out_dir / "lr").mkdir(parents=True, exist_ok=True)
    (out_dir / "hr").mkdir(parents=True, exist_ok=True)


def encode_manifest(rows: list[ManifestRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for row in rows:
        writer.writerow(row.as_csv())
    return buffer.getvalue()


async def build_dataset_async(
        n_train: int,
        n_test_per_tier: int,
        master_seed: int,
        out_dir: str | Path,
        config: DegradationConfig | None = None,
        force: bool = False,
        workers: int = 4,
) -> DatasetManifest:
    out_dir = Path(out_dir)
    config = config or DegradationConfig()
    _prepare_dir(out_dir, force)
    rows = plan_rows(master_seed, n_train, n_test_per_tier)
    semaphore = asyncio.Semaphore(max(1, workers))

    async def _one(row: ManifestRow):
        async with semaphore:
            await asyncio.to_thread(_write_sample, out_dir, row, config)

    await asyncio.gather(*(_one(row) for row in rows))
    (out_dir / MANIFEST_NAME).write_text(encode_manifest(rows), encoding="utf-8")
    logger.info(
        f"wrote dataset {out_dir}: {n_train} train, {n_test_per_tier} test per tier, seed {master_seed}"
    )
    return DatasetManifest(root=out_dir, rows=tuple(rows))


def build_dataset(
        n_train: int,
        n_test_per_tier: int,
        master_seed: int,
        out_dir: str | Path,
        config: DegradationConfig | None = None,
        force: bool = False,
        workers: int = 4,
) -> DatasetManifest:
    return asyncio.run(
        build_dataset_async(n_train, n_test_per_tier, master_seed, out_dir, config, force, workers)
    )


def read_manifest(root: str | Path) -> DatasetManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise DatasetFormatError(f"no {MANIFEST_NAME} in {root}")
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DatasetFormatError(f"unexpected manifest header {header}")
        try:
            rows = tuple(
                ManifestRow(id=r[0], label=r[1], tier=Tier(r[2]), split=Split(r[3]), seed=int(r[4]),
                            lr_path=r[5], hr_path=r[6])
                for r in reader
            )
        except (IndexError, ValueError) as e:
            raise DatasetFormatError(f"malformed manifest row in {path}") from e
    return DatasetManifest(root=root, rows=rows)


def load_sample(root: Path, row: ManifestRow) -> SamplePair:
    hr = read_ppm(root / row.hr_path)
    lr = read_ppm(root / row.lr_path)
    if hr.shape != HR_SHAPE or lr.shape != LR_SHAPE:
        raise DatasetFormatError(f"sample {row.id}: shapes {hr.shape} / {lr.shape}")
    return SamplePair(
        id=row.id, label=TextLabel(row.label), hr=to_float(hr), lr=to_float(lr),
        tier=row.tier, seed=row.seed, split=row.split,
    )


def load_dataset(
        root: str | Path,
        split: Split | str | None = None,
        limit: int | None = None,
) -> list[SamplePair]:
    """SamplePairs materialized from the stored 8-bit images."""
    manifest = read_manifest(root)
    rows = list(manifest.rows) if split is None else manifest.split(split)
    if limit is not None:
        rows = _stratified_head(rows, limit)
    return [load_sample(manifest.root, row) for row in rows]


def _stratified_head(rows: list[ManifestRow], limit: int) -> list[ManifestRow]:
    # keep tiers balanced when capping a split
    by_tier = {tier: [r for r in rows if r.tier == tier] for tier in TIERS}
    picked: list[ManifestRow] = []
    depth = 0
    while len(picked) < min(limit, len(rows)):
        for tier in TIERS:
            if depth < len(by_tier[tier]) and len(picked) < limit:
                picked.append(by_tier[tier][depth])
        depth += 1
    return sorted(picked, key=lambda r: r.id)


class DatasetExistsError(DPMNError):
    pass


class DatasetFormatError(DPMNError):
    pass
