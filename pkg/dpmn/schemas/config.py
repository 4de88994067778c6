# dpmn/schemas/config.py
'''Typed run configuration, the key = value file format and the config hash'''

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dpmn.errors import DPMNError

logger = logging.getLogger(__name__)

CMMVariant = Literal["full", "no_ca", "unet_like", "tsrn_like"]
SingleBranch = Literal["mask", "graphic", "concat"]
TrainStrategy = Literal["frozen", "finetune", "standalone"]

# fields that never change what a run computes
HASH_EXCLUDED = {"threads", "out", "log_level"}


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(int(v) for v in value.split(",") if v.strip())
    if isinstance(value, int):
        return (value,)
    return value


class NetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_pgrm: int = Field(3, ge=1)
    window_sizes: tuple[int, ...] = (2, 4, 8)
    heads: int = Field(6, ge=1)
    patch: int = Field(2, ge=1)
    embed_dim: int = Field(48, ge=1)
    grid: tuple[int, int] = (16, 64)
    alpha: float = Field(0.5, ge=0.0, le=1.0)
    dynamic_gate: bool = True
    ffn_ratio: int = Field(4, ge=1)
    cmm_variant: CMMVariant = "full"
    cmm_widths: tuple[int, int, int] = (16, 32, 64)
    psn_width: int = Field(32, ge=1)
    # attention residual: True adds LN(image tokens), False adds the raw tokens
    ln_residual: bool = True

    @field_validator("window_sizes", "grid", "cmm_widths", mode="before")
    @classmethod
    def _parse_lists(cls, value):
        return _split_list(value)

    @model_validator(mode="after")
    def _check_divisibility(self):
        if not self.window_sizes or min(self.window_sizes) < 1:
            raise ValueError("window_sizes must be non-empty positive integers")
        if self.heads % len(self.window_sizes):
            raise ValueError(f"heads={self.heads} not divisible by {len(self.window_sizes)} window sizes")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim={self.embed_dim} not divisible by heads={self.heads}")
        largest = max(self.window_sizes)
        if self.grid[0] % largest or self.grid[1] % largest:
            raise ValueError(f"token grid {self.grid} not divisible by window size {largest}")
        if self.grid[0] % 4 or self.grid[1] % 4:
            raise ValueError(f"token grid {self.grid} must allow two stride-2 stages in the CMM")
        return self

    @property
    def n_groups(self) -> int:
        return len(self.window_sizes)

    @property
    def heads_per_group(self) -> int:
        return self.heads // self.n_groups

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def group_dim(self) -> int:
        return self.embed_dim // self.n_groups

    @property
    def gated(self) -> bool:
        return self.dynamic_gate and self.n_groups > 1

    @property
    def image_hw(self) -> tuple[int, int]:
        return self.grid[0] * self.patch, self.grid[1] * self.patch

    @property
    def lr_hw(self) -> tuple[int, int]:
        h, w = self.image_hw
        return h // 2, w // 2


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_p: float = Field(1.0, ge=0.0)  # pixel term
    lambda_g: float = Field(1.0, ge=0.0)  # gradient-profile term
    lambda_cmm: float = Field(1.0, ge=0.0)
    lambda_graphic: float = Field(1.0, ge=0.0)
    lambda_structure: float = Field(1.0, ge=0.0)


class DegradationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_easy: float = Field(0.5, gt=0.0)
    sigma_medium: float = Field(1.0, gt=0.0)
    sigma_hard: float = Field(1.5, gt=0.0)
    noise_sigma: float = Field(0.01, ge=0.0)
    downsample: int = Field(2, ge=2, le=2)  # 2× box average

    @model_validator(mode="after")
    def _check_monotone(self):
        if not self.sigma_easy < self.sigma_medium < self.sigma_hard:
            raise ValueError("blur sigmas must increase strictly easy < medium < hard")
        return self

    def blur_sigma(self, tier: str) -> float:
        return {"easy": self.sigma_easy, "medium": self.sigma_medium, "hard": self.sigma_hard}[str(tier)]


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: Path | None = None
    out: Path | None = None
    epochs: int = Field(20, gt=0)
    psn_epochs: int = Field(5, gt=0)
    batch: int = Field(16, gt=0)
    lr: float = Field(1e-3, gt=0.0)
    seed: int = 0
    net: NetConfig = NetConfig()
    weights: LossWeights = LossWeights()
    degradation: DegradationConfig = DegradationConfig()
    n_train: int = Field(2000, gt=0)
    n_test_per_tier: int = Field(200, gt=0)
    train_limit: int | None = Field(None, gt=0)
    eval_limit: int | None = Field(None, gt=0)
    oracle_priors: bool = False
    single_branch: SingleBranch | None = None
    fixed_window: int | None = Field(None, ge=1)
    cmm_variant: CMMVariant | None = None
    train_strategy: TrainStrategy = "frozen"
    ablation: bool = False
    # "train" runs in float32; "verify" in float64 with finiteness checks
    precision: Literal["verify", "train"] = "train"
    eval_alphas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    threads: int | None = Field(None, ge=1)
    log_level: str = "INFO"

    @model_validator(mode="after")
    def _check_flags(self):
        if self.train_strategy != "frozen" and not self.ablation:
            raise ValueError(f"train_strategy={self.train_strategy} is only allowed with ablation = true")
        if self.fixed_window is not None:
            try:
                NetConfig(**{**self.net.model_dump(), "window_sizes": (self.fixed_window,)})
            except ValidationError as e:
                raise ValueError(f"fixed_window={self.fixed_window} does not fit the net: {e}") from e
        return self

    @field_validator("eval_alphas", mode="before")
    @classmethod
    def _parse_alphas(cls, value):
        if isinstance(value, str):
            return tuple(float(v) for v in value.split(",") if v.strip())
        if isinstance(value, (int, float)):
            return (float(value),)
        return value

    @field_validator("eval_alphas")
    @classmethod
    def _check_alphas(cls, value):
        if not value or any(not 0.0 <= a <= 1.0 for a in value):
            raise ValueError(f"eval_alphas must be non-empty values in [0, 1], got {value}")
        return value

    @field_validator("log_level")
    @classmethod
    def _check_log_level(cls, value: str) -> str:
        level = value.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level {value!r}")
        return level

    def effective_net(self) -> NetConfig:
        """NetConfig with the ablation flags folded in; this is what the model is built from."""
        update: dict[str, Any] = {}
        if self.fixed_window is not None:
            update["window_sizes"] = (self.fixed_window,)
            update["dynamic_gate"] = False
        if self.cmm_variant is not None:
            update["cmm_variant"] = self.cmm_variant
        if not update:
            return self.net
        return NetConfig(**{**self.net.model_dump(), **update})


def config_hash(config: RunConfig) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON of run-defining fields."""
    payload = config.model_dump(mode="json", exclude=HASH_EXCLUDED)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _coerce(raw: str) -> Any:
    value = raw.strip()
    if value.lower() in ("none", "null", ""):
        return None
    return value


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines into a nested dict; dotted keys address sub-models."""
    flat: dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        flat[key] = _coerce(value)
    return nest(flat)


def nest(flat: Mapping[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key {key!r} conflicts with scalar {part!r}")
            node = child
        node[leaf] = value
    return nested


def merge_nested(base: dict[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = merge_nested(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults < config file < overrides (dotted keys, None values ignored)."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        data = parse_config_text(path.read_text(encoding="utf-8"))
        logger.debug(f"read config file {path}")
    if overrides:
        data = merge_nested(data, nest({k: v for k, v in overrides.items() if v is not None}))
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def dump_config_text(config: RunConfig) -> str:
    """Render a config back into the key = value format (config echo)."""
    lines = []

    def _walk(prefix: str, payload: Mapping[str, Any]):
        for key, value in payload.items():
            if isinstance(value, Mapping):
                _walk(f"{prefix}{key}.", value)
            elif isinstance(value, (list, tuple)):
                lines.append(f"{prefix}{key} = {','.join(str(v) for v in value)}")
            else:
                lines.append(f"{prefix}{key} = {'none' if value is None else value}")

    _walk("", config.model_dump(mode="json"))
    return "\n".join(lines) + "\n"


class ConfigError(DPMNError, ValueError):
    pass


class ConfigHashMismatchError(DPMNError):
    pass
