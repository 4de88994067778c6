# dpmn/netblocks/model.py
'''Full network: two prior branches of PGRMs, the CMM, and the output fusion'''

import logging
from dataclasses import dataclass

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.checkpoint import MissingCheckpointError
from dpmn.diffcore.module import Module
from dpmn.diffcore.node import DiffNode
from dpmn.diffcore.rng import Rng
from dpmn.netblocks.cmm import build_cmm
from dpmn.netblocks.pgrm import PGRM
from dpmn.netblocks.psn import TinyPSN
from dpmn.priors.generator import PriorKind, PriorPair, make_priors
from dpmn.schemas.config import NetConfig
from dpmn.synthdata.degrade import bicubic_upsample

logger = logging.getLogger(__name__)

SINGLE_BRANCH_KINDS = {
    "mask": PriorKind.STRUCTURE,
    "graphic": PriorKind.GRAPHIC,
    "concat": PriorKind.CONCAT,
}


@dataclass
class ForwardResult:
    i0: DiffNode
    branches: dict[str, list[DiffNode]]
    i_m: DiffNode
    i_out: DiffNode


class DPMN(Module):
    def __init__(self, cfg: NetConfig, rng: Rng, single_branch: str | None = None):
        super().__init__()
        self.cfg = cfg
        self.single_branch = single_branch
        if single_branch is None:
            kinds = [PriorKind.GRAPHIC, PriorKind.STRUCTURE]
        else:
            kinds = [SINGLE_BRANCH_KINDS[single_branch]]
        self.branches: dict[PriorKind, list[PGRM]] = {}
        for kind in kinds:
            generator = rng.child("branch", kind.value).generator()
            self.branches[kind] = [
                self.add_module(f"{kind.value}{i}", PGRM(cfg, generator, kind)) for i in range(cfg.n_pgrm)
            ]
        self.cmm = self.add_module("cmm", build_cmm(cfg, rng.child("cmm").generator()))
        logger.debug(f"built DPMN with {self.parameter_count()} weights, branches={[k.value for k in kinds]}")

    def branch_forward(self, i0, kind: PriorKind, hr: np.ndarray | None = None) -> list[DiffNode]:
        """[I¹..I^N]; each step's prior comes from the previous estimate, or from ``hr`` when given."""
        current = ops.as_node(i0)
        oracle: PriorPair | None = make_priors(hr) if hr is not None else None
        images = []
        for pgrm in self.branches[kind]:
            priors = oracle if oracle is not None else make_priors(current)
            current = pgrm(current, priors.select(kind))
            images.append(current)
        return images

    def __call__(self, i0, hr: np.ndarray | None = None) -> tuple[dict[str, list[DiffNode]], DiffNode]:
        branches = {kind.value: self.branch_forward(i0, kind, hr) for kind in self.branches}
        if self.single_branch is not None:
            (images,) = branches.values()
            return branches, self.cmm(images[-1], images[-1])
        return branches, self.cmm(branches["graphic"][-1], branches["structure"][-1])


def fuse(i_m, i0, alpha: float) -> DiffNode:
    """I_OUT = α·I_M + (1−α)·I⁰."""
    return ops.add(ops.mul(i_m, float(alpha)), ops.mul(i0, 1.0 - float(alpha)))


def initial_estimate(lr, psn: TinyPSN | None, strategy: str = "frozen") -> DiffNode:
    if strategy == "standalone":
        values = lr.values if isinstance(lr, DiffNode) else np.asarray(lr)
        return ops.constant(bicubic_upsample(values))
    if psn is None:
        raise MissingCheckpointError(f"strategy {strategy!r} needs a trained TinyPSN")
    i0 = psn(lr)
    return ops.stop_gradient(i0) if strategy == "frozen" else i0


def dpmn_forward(
        model: DPMN,
        lr,
        psn: TinyPSN | None,
        alpha: float | None = None,
        strategy: str = "frozen",
        hr: np.ndarray | None = None,
) -> ForwardResult:
    """I⁰ from the PSN (or bicubic), both branches, CMM, and the α fusion."""
    alpha = model.cfg.alpha if alpha is None else alpha
    i0 = initial_estimate(lr, psn, strategy)
    branches, i_m = model(i0, hr=hr)
    return ForwardResult(i0=i0, branches=branches, i_m=i_m, i_out=fuse(i_m, i0, alpha))
