# dpmn/schemas/records.py
'''Plain records passed between data generation, training and evaluation'''

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from dpmn.priors.label import TextLabel


class Tier(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    def __str__(self) -> str:
        return self.value


TIERS = (Tier.EASY, Tier.MEDIUM, Tier.HARD)


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SamplePair:
    id: str
    label: TextLabel
    hr: np.ndarray  # 32×128×3
    lr: np.ndarray  # 16×64×3
    tier: Tier
    seed: int
    split: Split = Split.TRAIN


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    tier: Tier
    psnr_db: float
    ssim: float
    recognized: TextLabel
    exact_match: bool


@dataclass(frozen=True)
class MetricsRow:
    """One CSV line of aggregated metrics."""
    run_id: str
    split: str
    tier: str  # easy / medium / hard / average
    psnr: float
    ssim: float
    accuracy: float
    n_samples: int
    system: str
    alpha: float | None
    config_hash: str


@dataclass
class RunReport:
    config_hash: str
    loss_curve: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    epoch_psnr: list[float] = field(default_factory=list)
    skipped_steps: int = 0
    wall_clock_s: float = 0.0
    checkpoints: list[Path] = field(default_factory=list)
    eval_rows: list[MetricsRow] = field(default_factory=list)
