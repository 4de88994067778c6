'''Experiment orchestration: training, evaluation, ablations, gradient checks and reports'''

from dpmn.harness.ablation import SUITES, AblationCell, run_ablation, suite_cells
from dpmn.harness.evaluation import evaluate
from dpmn.harness.gradcheck_suite import format_suite, run_gradcheck_suite
from dpmn.harness.report import TrendCheck, build_report, write_report
from dpmn.harness.training import FrozenContractError, train_dpmn, train_psn, write_loss_curve

__all__ = [
    "SUITES",
    "AblationCell",
    "FrozenContractError",
    "TrendCheck",
    "build_report",
    "evaluate",
    "format_suite",
    "run_ablation",
    "run_gradcheck_suite",
    "suite_cells",
    "train_dpmn",
    "train_psn",
    "write_loss_curve",
    "write_report",
]
