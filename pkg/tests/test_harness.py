import json
import math

import pytest
from numpy.testing import assert_array_equal

from dpmn.errors import DPMNError
from dpmn.harness.ablation import SUITES, AblationCell, load_cell, run_ablation, save_cell, suite_cells
from dpmn.harness.evaluation import evaluate, system_name
from dpmn.harness.gradcheck_suite import format_suite, run_gradcheck_suite
from dpmn.harness.report import build_report, write_report
from dpmn.harness.training import train_dpmn, train_psn, write_loss_curve
from dpmn.losses_metrics.metrics import read_metrics_csv, write_metrics_csv
from dpmn.main import main
from dpmn.netblocks.persistence import load_psn, read_manifest
from dpmn.schemas.config import ConfigError, ConfigHashMismatchError, config_hash
from dpmn.schemas.records import MetricsRow, RunReport, Split
from dpmn.synthdata.dataset import load_dataset


@pytest.mark.slow
def test_training_reports_one_loss_per_step(trained):
    config, report, psn_report = trained.config, trained.report, trained.psn_report
    steps = config.epochs * math.ceil(6 / config.batch)
    assert len(report.loss_curve) == steps
    assert len(psn_report.loss_curve) == config.psn_epochs * math.ceil(6 / config.batch)
    assert len(report.epoch_psnr) == config.epochs
    assert all(math.isfinite(v) for v in report.loss_curve)
    assert report.config_hash == config_hash(config)


@pytest.mark.slow
def test_frozen_psn_survives_dpmn_training(trained):
    psn_path = trained.psn_path
    assert psn_path.read_bytes() == trained.psn_bytes
    manifest = read_manifest(psn_path)
    assert manifest["kind"] == "psn" and manifest["frozen"] == "true"
    loaded = load_psn(psn_path)
    assert loaded.frozen
    trained_state = trained.psn.state_dict()
    for name, values in loaded.state_dict().items():
        assert_array_equal(values, trained_state[name])


@pytest.mark.slow
def test_zero_alpha_reproduces_the_psn(trained, tmp_path):
    config = trained.config
    samples = load_dataset(config.dataset, Split.TEST)
    rows = evaluate(config, samples, trained.psn, trained.model, out_dir=tmp_path, run_id="t", workers=2)
    by_key = {(r.system, r.tier): r for r in rows}
    for tier in ("easy", "medium", "hard", "average"):
        psn_row, fused = by_key[("psn", tier)], by_key[(system_name("dpmn", 0.0), tier)]
        assert fused.psnr == psn_row.psnr
        assert fused.ssim == psn_row.ssim
        assert fused.accuracy == psn_row.accuracy
    assert {r.system for r in rows} == {"bicubic", "psn", "dpmn@0", "dpmn@0.5", "dpmn@1"}
    assert read_metrics_csv(tmp_path / "metrics.csv") == rows
    assert (tmp_path / "grid.ppm").read_bytes().startswith(b"P6\n")


@pytest.mark.slow
def test_dpmn_needs_a_psn_unless_standalone(trained, tmp_path):
    with pytest.raises(DPMNError, match="needs a PSN"):
        train_dpmn(trained.config, None, tmp_path)


def test_seeded_training_runs_follow_the_same_trajectory(tiny_run, tmp_path):
    config = tiny_run.model_copy(update={"psn_epochs": 2})
    first, first_report = train_psn(config, tmp_path / "a.ckpt")
    second, second_report = train_psn(config, tmp_path / "b.ckpt")
    assert len(first_report.loss_curve) == 4
    assert first_report.loss_curve == second_report.loss_curve
    assert first_report.epoch_psnr == second_report.epoch_psnr
    second_state = second.state_dict()
    for name, values in first.state_dict().items():
        assert_array_equal(values, second_state[name])
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_loss_curve_csv(tmp_path):
    path = write_loss_curve(tmp_path / "curve.csv", RunReport("h", loss_curve=[0.5, 0.25]))
    assert path.read_text().splitlines() == ["step,loss", "0,0.5", "1,0.25"]


def test_suite_cells():
    assert [c.cell_id for c in suite_cells("strategy")] == [
        "strategy.frozen", "strategy.finetune", "strategy.standalone"]
    assert len(suite_cells("all")) == sum(len(cells) for cells in SUITES.values())
    with pytest.raises(ConfigError):
        suite_cells("nope")


def test_cell_configs_apply_overrides(tiny_run):
    window = {c.name: c for c in SUITES["window"]}
    assert window["fixed4"].config(tiny_run).effective_net().window_sizes == (4,)
    deep = {c.name: c for c in SUITES["pgrm_count"]}["n3"].config(tiny_run)
    assert deep.net.n_pgrm == 3 and deep.net.embed_dim == 8
    with pytest.raises(ConfigError):
        AblationCell("x", "bad", {"fixed_window": 3}).config(tiny_run)


def _row(system: str, tier: str, psnr: float, accuracy: float, alpha=None) -> MetricsRow:
    return MetricsRow("r", "test", tier, psnr, 0.8, accuracy, 10, system, alpha, "abc")


def test_cell_records_resume_and_detect_stale_hashes(tmp_path):
    cell = AblationCell("priors", "dual")
    path = tmp_path / "cells" / "priors.dual.json"
    assert load_cell(path, "h1") is None
    rows = [_row("dpmn@0.5", "average", 20.0, 0.5, 0.5)]
    save_cell(path, cell, "h1", rows, 1.5)
    assert load_cell(path, "h1") == rows
    assert json.loads(path.read_text())["cell_id"] == "priors.dual"
    with pytest.raises(ConfigHashMismatchError):
        load_cell(path, "h2")


@pytest.mark.slow
def test_ablation_grid_writes_one_row_per_cell_and_resumes(tiny_run, tmp_path, monkeypatch):
    cells = [AblationCell("tiny", "dual"), AblationCell("tiny", "mask", {"single_branch": "mask"})]
    monkeypatch.setitem(SUITES, "tiny", cells)
    path = run_ablation("tiny", tiny_run, tmp_path)
    rows = read_metrics_csv(path)
    assert [r.system for r in rows] == ["tiny.dual", "tiny.mask"]
    assert all(r.run_id == "tiny" and r.tier == "average" for r in rows)

    stamp = (tmp_path / "cells" / "tiny.dual.json").stat().st_mtime_ns
    assert read_metrics_csv(run_ablation("tiny", tiny_run, tmp_path)) == rows
    assert (tmp_path / "cells" / "tiny.dual.json").stat().st_mtime_ns == stamp

    with pytest.raises(ConfigHashMismatchError):
        run_ablation("tiny", tiny_run.model_copy(update={"seed": 99}), tmp_path)


def test_report_trend_checks(tmp_path):
    rows = []
    for tier, base in (("easy", 24.0), ("medium", 22.0), ("hard", 20.0), ("average", 22.0)):
        acc = {"easy": 0.9, "medium": 0.6, "hard": 0.3, "average": 0.6}[tier]
        rows.append(_row("psn", tier, base, acc))
        rows.append(_row("dpmn@0.5", tier, base + 0.5, acc, 0.5))
    write_metrics_csv(tmp_path / "run" / "metrics.csv", rows)
    write_metrics_csv(tmp_path / "ablation_priors.csv", [
        _row("priors.dual", "average", 22.0, 0.7, 0.5),
        _row("priors.dual_oracle", "average", 22.1, 0.8, 0.5),
        _row("priors.mask", "average", 21.0, 0.65, 0.5),
    ])

    text, checks = build_report(tmp_path)
    status = {c.name: c.status for c in checks}
    assert status["enhancement"] == "PASS"
    assert status["tiers[psn]"] == "PASS" and status["tiers[dpmn@0.5]"] == "PASS"
    assert status["oracle_gap"] == "FAIL"
    assert status["dual_vs_single"] == "PASS"
    assert status["frozen_best"] == "SKIP"
    assert "ablation_priors.csv" in text and "run/metrics.csv" in text

    path, _ = write_report(tmp_path)
    assert path.read_text() == text


def test_gradcheck_suite_subset():
    entries = run_gradcheck_suite(names=["patch_embed", "leff", "img_loss", "priors_detached"])
    assert [e.name for e in entries] == ["patch_embed", "leff", "img_loss", "priors_detached"]
    assert all(e.passed for e in entries), format_suite(entries)
    assert format_suite(entries).endswith("s")
    with pytest.raises(KeyError):
        run_gradcheck_suite(names=["nope"])


@pytest.mark.slow
def test_gradcheck_suite_everything_passes():
    entries = run_gradcheck_suite()
    assert all(e.passed for e in entries), format_suite(entries)


def test_cli_exit_codes(tmp_path):
    assert main(["train-dpmn", "--out", str(tmp_path / "o")]) == 2  # no dataset
    assert main(["report", "--out", str(tmp_path), "--log-level", "LOUD"]) == 2
    assert main(["eval", "--dataset", str(tmp_path)]) == 2  # nothing to evaluate
    assert main(["eval", "--dataset", str(tmp_path), "--psn", str(tmp_path / "absent.ckpt")]) == 1
    with pytest.raises(SystemExit) as info:
        main(["ablate", "--suite", "nope"])
    assert info.value.code == 2


def test_cli_gen_data_and_report(tmp_path):
    data = tmp_path / "data"
    args = ["gen-data", "--out", str(data), "--n-train", "2", "--n-test-per-tier", "1", "--seed", "4"]
    assert main(args) == 0
    assert len(load_dataset(data, Split.TEST)) == 3
    assert (tmp_path / "run.log").exists()
    assert main(args) == 1  # directory already holds a dataset
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.txt").exists()
