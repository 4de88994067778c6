# dpmn/main.py
'''Command-line entry point: data generation, training, evaluation, ablations, gradcheck, reports'''

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from dpmn.errors import DPMNError
from dpmn.harness.ablation import SUITES, run_ablation
from dpmn.harness.evaluation import evaluate
from dpmn.harness.gradcheck_suite import format_suite, run_gradcheck_suite
from dpmn.harness.report import write_report
from dpmn.harness.training import train_dpmn, train_psn, write_loss_curve
from dpmn.netblocks.persistence import load_dpmn, load_psn, read_manifest
from dpmn.schemas.config import ConfigError, RunConfig, config_hash, dump_config_text, load_run_config
from dpmn.schemas.records import Split
from dpmn.synthdata.dataset import build_dataset, load_dataset

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
RUN_LOG = "run.log"
THREADS_ENV = "DPMN_THREADS"


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--dataset", type=Path)
    common.add_argument("--out", type=Path)
    common.add_argument("--threads", type=int, help=f"worker threads (falls back to ${THREADS_ENV})")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--train-limit", type=int)
    common.add_argument("--eval-limit", type=int)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="dpmn", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", parents=[common], help="write the synthetic benchmark")
    gen.add_argument("--n-train", type=int)
    gen.add_argument("--n-test-per-tier", type=int)
    gen.add_argument("--force", action="store_true", help="replace an existing dataset directory")

    commands.add_parser("train-psn", parents=[common], help="train and freeze TinyPSN (--out is the checkpoint)")

    train = commands.add_parser("train-dpmn", parents=[common], help="train the DPMN on a frozen PSN")
    train.add_argument("--psn", type=Path, help="TinyPSN checkpoint")

    ev = commands.add_parser("eval", parents=[common], help="metrics CSV and image grid on the test split")
    ev.add_argument("--psn", type=Path)
    ev.add_argument("--dpmn", type=Path)
    ev.add_argument("--alpha", help="fusion ratio or comma list of ratios")

    ablate = commands.add_parser("ablate", parents=[common], help="run an ablation grid")
    ablate.add_argument("--suite", required=True, choices=[*SUITES, "all"])
    ablate.add_argument("--psn", type=Path, help="shared TinyPSN; trained under --out when omitted")

    commands.add_parser("gradcheck", parents=[common], help="finite-difference check of every block and loss")
    commands.add_parser("report", parents=[common], help="tables and trend checks for CSVs under --out")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    keys = ("seed", "dataset", "out", "threads", "log_level", "train_limit", "eval_limit",
            "n_train", "n_test_per_tier")
    overrides = {key: getattr(args, key, None) for key in keys}
    overrides["eval_alphas"] = getattr(args, "alpha", None)
    return overrides


def configure_logging(level: str, log_dir: Path | None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / RUN_LOG, encoding="utf-8"))
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, handlers=handlers, force=True)


def worker_count(config: RunConfig) -> int:
    if config.threads is not None:
        return config.threads
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from e
    return 1


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required for this command")
    return value


def _log_dir(args: argparse.Namespace, config: RunConfig) -> Path | None:
    if config.out is None:
        return None
    # train-psn writes a checkpoint file and gen-data needs an empty directory; both log beside --out
    return config.out.parent if args.command in ("train-psn", "gen-data") else config.out


def cmd_gen_data(args, config: RunConfig) -> int:
    out = _require(config.out, "--out")
    build_dataset(config.n_train, config.n_test_per_tier, config.seed, out,
                  config.degradation, force=args.force, workers=worker_count(config))
    return 0


def cmd_train_psn(args, config: RunConfig) -> int:
    out = _require(config.out, "--out")
    _require(config.dataset, "--dataset")
    _, report = train_psn(config, out)
    write_loss_curve(out.with_name(out.name + ".loss.csv"), report)
    logger.info(f"TinyPSN done in {report.wall_clock_s:.1f}s, {report.skipped_steps} skipped steps")
    return 0


def cmd_train_dpmn(args, config: RunConfig) -> int:
    out = _require(config.out, "--out")
    _require(config.dataset, "--dataset")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config_text(config), encoding="utf-8")
    _, report = train_dpmn(config, args.psn, out)
    write_loss_curve(out / "loss_curve.csv", report)
    logger.info(f"DPMN done in {report.wall_clock_s:.1f}s, {report.skipped_steps} skipped steps")
    return 0


def cmd_eval(args, config: RunConfig) -> int:
    dataset = _require(config.dataset, "--dataset")
    if args.psn is None and args.dpmn is None:
        raise ConfigError("eval needs --psn, --dpmn or both")
    model = None
    if args.dpmn is not None:
        manifest = read_manifest(args.dpmn)
        # the checkpoint decides how I⁰ and the priors are produced
        config = config.model_copy(update={
            "train_strategy": manifest.get("train_strategy", "frozen"),
            "oracle_priors": str(manifest.get("oracle_priors", "false")).lower() == "true",
        })
        model = load_dpmn(args.dpmn)
    psn = load_psn(args.psn) if args.psn is not None else None
    if model is not None and psn is None and config.train_strategy != "standalone":
        raise ConfigError(f"a {config.train_strategy} DPMN needs its PSN (--psn)")
    samples = load_dataset(dataset, Split.TEST, limit=config.eval_limit)
    evaluate(config, samples, psn, model, out_dir=config.out, run_id=config_hash(config),
             workers=worker_count(config))
    return 0


def cmd_ablate(args, config: RunConfig) -> int:
    out = _require(config.out, "--out")
    _require(config.dataset, "--dataset")
    run_ablation(args.suite, config, out, psn_path=args.psn, workers=worker_count(config))
    return 0


def cmd_gradcheck(args, config: RunConfig) -> int:
    entries = run_gradcheck_suite(seed=config.seed)
    print(format_suite(entries))
    return 0 if all(e.passed for e in entries) else 1


def cmd_report(args, config: RunConfig) -> int:
    path, _ = write_report(_require(config.out, "--out"))
    print(path.read_text(encoding="utf-8"), end="")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-psn": cmd_train_psn,
    "train-dpmn": cmd_train_dpmn,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, _overrides(args))
    except ConfigError as e:
        logging.basicConfig(format=LOG_FORMAT)
        logger.error(str(e))
        return 2
    configure_logging(config.log_level, _log_dir(args, config))
    logger.info(f"dpmn {args.command} (config {config_hash(config)})")
    try:
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        logger.error(str(e))
        return 2
    except DPMNError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
