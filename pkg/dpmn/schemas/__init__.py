'''Configuration models and shared records'''

from dpmn.schemas.config import (
    ConfigError,
    ConfigHashMismatchError,
    DegradationConfig,
    LossWeights,
    NetConfig,
    RunConfig,
    config_hash,
    dump_config_text,
    load_run_config,
    parse_config_text,
)
from dpmn.schemas.records import TIERS, EvalRecord, MetricsRow, RunReport, SamplePair, Split, Tier

__all__ = [
    "TIERS",
    "ConfigError",
    "ConfigHashMismatchError",
    "DegradationConfig",
    "EvalRecord",
    "LossWeights",
    "MetricsRow",
    "NetConfig",
    "RunConfig",
    "RunReport",
    "SamplePair",
    "Split",
    "Tier",
    "config_hash",
    "dump_config_text",
    "load_run_config",
    "parse_config_text",
]
