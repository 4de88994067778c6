# dpmn/harness/report.py
'''Plain-text tables and trend checks over every metrics CSV in a directory'''

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from dpmn.losses_metrics.metrics import read_metrics_csv
from dpmn.schemas.records import TIERS, MetricsRow

logger = logging.getLogger(__name__)

MIN_ENHANCEMENT_DB = 0.1
MIN_ORACLE_GAP_DB = 0.3
REPORT_NAME = "report.txt"


@dataclass(frozen=True)
class TrendCheck:
    name: str
    passed: bool | None  # None: the inputs for this check were not found
    detail: str

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]


def find_tables(root: str | Path) -> dict[Path, list[MetricsRow]]:
    root = Path(root)
    paths = sorted({*root.rglob("metrics.csv"), *root.rglob("ablation_*.csv")})
    return {path: read_metrics_csv(path) for path in paths}


def format_table(rows: Sequence[MetricsRow]) -> str:
    header = f"{'system':<24} {'tier':<8} {'alpha':>5} {'PSNR':>8} {'SSIM':>7} {'acc':>6} {'n':>5}"
    lines = [header, "-" * len(header)]
    for r in rows:
        alpha = "" if r.alpha is None else f"{r.alpha:g}"
        lines.append(
            f"{r.system:<24} {r.tier:<8} {alpha:>5} {r.psnr:>8.3f} {r.ssim:>7.4f} {r.accuracy:>6.3f} {r.n_samples:>5}"
        )
    return "\n".join(lines)


def _averages(rows: Sequence[MetricsRow]) -> dict[str, MetricsRow]:
    return {r.system: r for r in rows if r.tier == "average"}


def check_enhancement(rows: Sequence[MetricsRow]) -> TrendCheck:
    """Best-α DPMN beats the PSN by the PSNR margin without losing recognizer accuracy."""
    avg = _averages(rows)
    dpmn = [r for name, r in avg.items() if name.startswith("dpmn@")]
    if "psn" not in avg or not dpmn:
        return TrendCheck("enhancement", None, "needs psn and dpmn@α rows")
    best = max(dpmn, key=lambda r: r.psnr)
    gain = best.psnr - avg["psn"].psnr
    ok = gain >= MIN_ENHANCEMENT_DB and best.accuracy >= avg["psn"].accuracy
    return TrendCheck(
        "enhancement", ok,
        f"{best.system} {gain:+.3f} dB over psn (need ≥ {MIN_ENHANCEMENT_DB}), "
        f"acc {best.accuracy:.3f} vs {avg['psn'].accuracy:.3f}",
    )


def check_tier_monotonic(rows: Sequence[MetricsRow]) -> list[TrendCheck]:
    checks = []
    for system in dict.fromkeys(r.system for r in rows):
        by_tier = {r.tier: r for r in rows if r.system == system}
        if not all(str(t) in by_tier for t in TIERS):
            continue
        easy, medium, hard = (by_tier[str(t)] for t in TIERS)
        ok = easy.psnr > medium.psnr > hard.psnr and easy.accuracy > medium.accuracy > hard.accuracy
        checks.append(TrendCheck(
            f"tiers[{system}]", ok,
            f"PSNR {easy.psnr:.2f}/{medium.psnr:.2f}/{hard.psnr:.2f}, "
            f"acc {easy.accuracy:.3f}/{medium.accuracy:.3f}/{hard.accuracy:.3f}",
        ))
    return checks


def check_oracle_gap(cells: dict[str, MetricsRow]) -> TrendCheck:
    dual, oracle = cells.get("priors.dual"), cells.get("priors.dual_oracle")
    if dual is None or oracle is None:
        return TrendCheck("oracle_gap", None, "needs priors.dual and priors.dual_oracle")
    gap = oracle.psnr - dual.psnr
    return TrendCheck("oracle_gap", gap >= MIN_ORACLE_GAP_DB, f"{gap:+.3f} dB (need ≥ {MIN_ORACLE_GAP_DB})")


def check_dual_beats_single(cells: dict[str, MetricsRow]) -> TrendCheck:
    dual = cells.get("priors.dual")
    singles = [cells[k] for k in ("priors.mask", "priors.graphic", "priors.concat") if k in cells]
    if dual is None or not singles:
        return TrendCheck("dual_vs_single", None, "needs priors.dual and single-branch cells")
    ok = all(dual.accuracy >= s.accuracy for s in singles)
    detail = ", ".join(f"{s.system} {s.accuracy:.3f}" for s in singles)
    return TrendCheck("dual_vs_single", ok, f"dual acc {dual.accuracy:.3f} vs {detail}")


def check_frozen_best(cells: dict[str, MetricsRow]) -> TrendCheck:
    frozen = cells.get("strategy.frozen")
    others = [cells[k] for k in ("strategy.finetune", "strategy.standalone") if k in cells]
    if frozen is None or not others:
        return TrendCheck("frozen_best", None, "needs strategy.frozen and another strategy cell")
    ok = all(frozen.psnr >= o.psnr for o in others)
    detail = ", ".join(f"{o.system} {o.psnr:.3f}" for o in others)
    return TrendCheck("frozen_best", ok, f"frozen {frozen.psnr:.3f} dB vs {detail}")


def trend_checks(tables: dict[Path, list[MetricsRow]]) -> list[TrendCheck]:
    checks: list[TrendCheck] = []
    cells: dict[str, MetricsRow] = {}
    for path, rows in tables.items():
        if path.name.startswith("ablation_"):
            cells.update({r.system: r for r in rows})
        else:
            checks.append(check_enhancement(rows))
            checks += check_tier_monotonic(rows)
    checks += [check_oracle_gap(cells), check_dual_beats_single(cells), check_frozen_best(cells)]
    return checks


def build_report(root: str | Path) -> tuple[str, list[TrendCheck]]:
    root = Path(root)
    tables = find_tables(root)
    sections = []
    for path, rows in tables.items():
        hashes = sorted({r.config_hash for r in rows})
        sections.append(f"== {path.relative_to(root)} (config {', '.join(hashes)})\n{format_table(rows)}")
    checks = trend_checks(tables)
    sections.append("== trend checks\n" + "\n".join(f"{c.status:<5} {c.name}: {c.detail}" for c in checks))
    return "\n\n".join(sections) + "\n", checks


def write_report(root: str | Path) -> tuple[Path, list[TrendCheck]]:
    text, checks = build_report(root)
    path = Path(root) / REPORT_NAME
    path.write_text(text, encoding="utf-8")
    failed = [c.name for c in checks if c.passed is False]
    if failed:
        logger.warning(f"trend checks failed: {failed}")
    logger.info(f"wrote {path}")
    return path, checks
