# dpmn/netblocks/persistence.py
'''Self-describing model checkpoints: binary tensors plus a key = value manifest'''

import logging
from pathlib import Path
from typing import Any

from dpmn.diffcore.checkpoint import FORMAT_VERSION, MissingCheckpointError, read_checkpoint, write_checkpoint
from dpmn.diffcore.module import Module
from dpmn.diffcore.rng import Rng
from dpmn.netblocks.model import DPMN
from dpmn.netblocks.psn import TinyPSN
from dpmn.schemas.config import ConfigError, NetConfig, parse_config_text

logger = logging.getLogger(__name__)


def manifest_path(checkpoint: str | Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".manifest")


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    return str(value)


def save_model(
        path: str | Path,
        module: Module,
        net: NetConfig,
        kind: str,
        frozen: bool = False,
        **extra: Any,
) -> Path:
    path = write_checkpoint(path, module.state_dict())
    lines = [f"kind = {kind}", f"frozen = {_format(frozen)}", f"format_version = {FORMAT_VERSION}"]
    lines += [f"{key} = {_format(value)}" for key, value in extra.items()]
    lines += [f"net.{key} = {_format(value)}" for key, value in net.model_dump(mode="json").items()]
    manifest_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"saved {kind} checkpoint {path} ({module.parameter_count()} weights)")
    return path


def read_manifest(path: str | Path) -> dict[str, Any]:
    manifest = manifest_path(path)
    if not manifest.exists():
        raise MissingCheckpointError(f"model manifest not found: {manifest}")
    return parse_config_text(manifest.read_text(encoding="utf-8"))


def _net_from_manifest(manifest: dict[str, Any]) -> NetConfig:
    try:
        return NetConfig(**manifest.get("net", {}))
    except ValueError as e:
        raise ConfigError(f"manifest holds an invalid net config: {e}") from e


def _expect_kind(manifest: dict[str, Any], kind: str, path: str | Path) -> None:
    if manifest.get("kind") != kind:
        raise ConfigError(f"{path} holds a {manifest.get('kind')!r} checkpoint, expected {kind!r}")


def load_psn(path: str | Path, freeze: bool = True) -> TinyPSN:
    """Rebuild a TinyPSN from its checkpoint; frozen unless asked otherwise."""
    manifest = read_manifest(path)
    _expect_kind(manifest, "psn", path)
    net = _net_from_manifest(manifest)
    psn = TinyPSN(Rng(0).generator(), width=net.psn_width)
    psn.load_state_dict(read_checkpoint(path))
    if freeze:
        psn.freeze()
    return psn


def load_dpmn(path: str | Path) -> DPMN:
    manifest = read_manifest(path)
    _expect_kind(manifest, "dpmn", path)
    net = _net_from_manifest(manifest)
    single_branch = manifest.get("single_branch")
    model = DPMN(net, Rng(0), single_branch=single_branch)
    model.load_state_dict(read_checkpoint(path))
    return model
