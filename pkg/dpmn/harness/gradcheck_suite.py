# dpmn/harness/gradcheck_suite.py
'''Finite-difference verification of every block and loss at toy shapes'''

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.gradcheck import GradcheckReport, ParamCheck, gradcheck
from dpmn.diffcore.module import Module, Parameter
from dpmn.diffcore.node import DiffNode, backward, precision
from dpmn.diffcore.rng import Rng
from dpmn.losses_metrics.losses import branch_loss, cmm_loss, img_loss, total_loss
from dpmn.netblocks.attention import LeFF, WindowCrossAttention
from dpmn.netblocks.cmm import CMM_VARIANTS
from dpmn.netblocks.layers import PatchEmbed
from dpmn.netblocks.model import DPMN, dpmn_forward
from dpmn.netblocks.pgrm import PGRM, expand_prior
from dpmn.netblocks.psn import TinyPSN
from dpmn.priors.generator import PriorKind, make_priors
from dpmn.schemas.config import DegradationConfig, NetConfig
from dpmn.schemas.records import Tier
from dpmn.synthdata.degrade import degrade_to_lr
from dpmn.synthdata.render import render_hr

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
EPSILON = 1e-5

# 8×32 images, 4×16 token grid, two window groups
TOY_NET = NetConfig(
    n_pgrm=1, window_sizes=(2, 4), heads=2, patch=2, embed_dim=8, grid=(4, 16),
    ffn_ratio=2, cmm_widths=(4, 4, 4), psn_width=4,
)
# full 32×128 geometry with a single PGRM per branch, so priors come from the constant I⁰
MODEL_NET = NetConfig(
    n_pgrm=1, window_sizes=(2, 4), heads=2, patch=2, embed_dim=8, grid=(16, 64),
    ffn_ratio=1, cmm_widths=(4, 4, 4), psn_width=4,
)
MODEL_PARAM_STRIDE = 5

LossBuilder = Callable[[list[Parameter]], DiffNode]


@dataclass
class SuiteEntry:
    name: str
    report: GradcheckReport
    seconds: float

    @property
    def passed(self) -> bool:
        return self.report.passed


def _image(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.uniform(0.05, 0.95, size=shape)


def _projection(out: DiffNode, weight: np.ndarray) -> DiffNode:
    """A fixed random linear functional of a block's output, reducing it to a scalar."""
    return ops.reduce_sum(ops.mul(out, ops.constant(weight)))


def _block_check(module: Module, inputs: dict[str, np.ndarray], forward, rng) -> tuple[LossBuilder, dict]:
    leaves = {f"input.{name}": Parameter.create(f"input.{name}", values) for name, values in inputs.items()}
    projection_weight: dict[str, np.ndarray] = {}

    def build(_: list[Parameter]) -> DiffNode:
        out = forward(*(p.node for p in leaves.values()))
        if "w" not in projection_weight:
            projection_weight["w"] = rng.standard_normal(out.shape)
        return _projection(out, projection_weight["w"])

    return build, {**dict(module.named_parameters()), **leaves}


def check_patch_embed(rng: np.random.Generator):
    module = PatchEmbed(rng, 3, TOY_NET.embed_dim, TOY_NET.patch)
    return _block_check(module, {"image": _image(rng, 8, 32, 3)}, module, rng)


def _mca(shifted: bool):
    def check(rng: np.random.Generator):
        module = WindowCrossAttention(TOY_NET, rng, shifted=shifted)
        tokens = {"prior": rng.standard_normal((4, 16, 8)), "image": rng.standard_normal((4, 16, 8))}
        return _block_check(module, tokens, module, rng)
    return check


def check_leff(rng: np.random.Generator):
    module = LeFF(rng, TOY_NET.embed_dim, TOY_NET.ffn_ratio)
    return _block_check(module, {"tokens": rng.standard_normal((4, 16, 8))}, module, rng)


def _pgrm(kind: PriorKind, channels: int):
    def check(rng: np.random.Generator):
        module = PGRM(TOY_NET, rng, kind)
        prior = (rng.uniform(size=(8, 32, channels)) > 0.5).astype(np.float64)
        return _block_check(module, {"image": _image(rng, 8, 32, 3)}, lambda image: module(image, prior), rng)
    return check


def _cmm(variant: str):
    def check(rng: np.random.Generator):
        cfg = NetConfig(**{**TOY_NET.model_dump(), "cmm_variant": variant})
        module = CMM_VARIANTS[variant](cfg, rng)
        images = {"graphic": _image(rng, 8, 32, 3), "structure": _image(rng, 8, 32, 3)}
        return _block_check(module, images, module, rng)
    return check


def check_tiny_psn(rng: np.random.Generator):
    module = TinyPSN(rng, width=TOY_NET.psn_width)
    return _block_check(module, {"lr": _image(rng, 4, 16, 3)}, module, rng)


def check_img_loss(rng: np.random.Generator):
    prediction = Parameter.create("prediction", _image(rng, 8, 32, 3))
    target = _image(rng, 8, 32, 3)
    return (lambda _: img_loss(prediction.node, target)), [prediction]


def check_branch_losses(rng: np.random.Generator):
    images = [Parameter.create(f"branch{i}", _image(rng, 8, 32, 3)) for i in range(3)]
    fused = Parameter.create("fused", _image(rng, 8, 32, 3))
    target = _image(rng, 8, 32, 3)

    def build(_: list[Parameter]) -> DiffNode:
        nodes = [p.node for p in images]
        return total_loss(cmm_loss(fused.node, target), branch_loss(nodes[:2], target),
                          branch_loss(nodes[2:], target))

    return build, [*images, fused]


def _model_sample() -> tuple[np.ndarray, np.ndarray]:
    hr = render_hr("DPMN42", style_seed=3)
    return hr, degrade_to_lr(hr, DegradationConfig(), Tier.EASY, seed=3)


def check_full_model(rng: np.random.Generator):
    """Total objective through both branches and the CMM; I⁰ is the bicubic upsample."""
    model = DPMN(MODEL_NET, Rng(int(rng.integers(1 << 31))))
    hr, lr = _model_sample()

    def build(_: list[Parameter]) -> DiffNode:
        result = dpmn_forward(model, lr, None, strategy="standalone")
        return total_loss(
            cmm_loss(result.i_m, hr),
            branch_loss(result.branches["graphic"], hr),
            branch_loss(result.branches["structure"], hr),
        )

    named = list(model.named_parameters())
    return build, dict(named[::MODEL_PARAM_STRIDE])


def check_priors_detached(rng: np.random.Generator) -> GradcheckReport:
    """Priors are constants: a loss reached only through them leaves the source image gradient exactly zero."""
    hr, _ = _model_sample()
    source = Parameter.create("source", hr)
    embed = PatchEmbed(rng, 3, MODEL_NET.embed_dim, MODEL_NET.patch)
    priors = make_priors(source.node)
    loss = ops.reduce_sum(embed(expand_prior(priors.select(PriorKind.STRUCTURE), PriorKind.STRUCTURE)))
    loss = ops.add(loss, ops.reduce_sum(ops.constant(priors.graphic)))
    backward(loss)
    upstream = float(np.max(np.abs(source.grad)))
    report = GradcheckReport(tol=0.0, checks=[ParamCheck("priors.upstream", upstream, source.values.size)])
    if upstream != 0.0:
        logger.warning(f"gradient leaked through the priors: max |grad| {upstream:.3e}")
    return report


CHECKS: dict[str, Callable] = {
    "patch_embed": check_patch_embed,
    "dw_mca": _mca(shifted=False),
    "dsw_mca": _mca(shifted=True),
    "leff": check_leff,
    "pgrm.graphic": _pgrm(PriorKind.GRAPHIC, 2),
    "pgrm.structure": _pgrm(PriorKind.STRUCTURE, 1),
    **{f"cmm.{variant}": _cmm(variant) for variant in CMM_VARIANTS},
    "tiny_psn": check_tiny_psn,
    "img_loss": check_img_loss,
    "total_loss": check_branch_losses,
    "full_model": check_full_model,
}
EXACT_CHECKS: dict[str, Callable] = {"priors_detached": check_priors_detached}


def run_gradcheck_suite(
        seed: int = 0,
        names: Sequence[str] | None = None,
        tol: float = TOLERANCE,
) -> list[SuiteEntry]:
    """Run the named checks (all by default) in fp64 verification mode."""
    selected = list(names) if names is not None else [*CHECKS, *EXACT_CHECKS]
    unknown = sorted(set(selected) - set(CHECKS) - set(EXACT_CHECKS))
    if unknown:
        raise KeyError(f"unknown gradcheck items: {unknown}")
    entries = []
    with precision("verify"):
        for name in selected:
            rng = Rng(seed).child("gradcheck", name).generator()
            started = time.perf_counter()
            if name in EXACT_CHECKS:
                report = EXACT_CHECKS[name](rng)
            else:
                build, params = CHECKS[name](rng)
                report = gradcheck(build, params, tol=tol, eps=EPSILON, seed=seed)
            entry = SuiteEntry(name, report, time.perf_counter() - started)
            logger.info(
                f"gradcheck {name}: {'ok' if entry.passed else 'FAIL'} "
                f"max rel err {report.max_rel_err:.2e} ({entry.seconds:.1f}s)"
            )
            entries.append(entry)
    return entries


def format_suite(entries: Sequence[SuiteEntry]) -> str:
    lines = [f"{'item':<18} {'status':<6} {'max_rel_err':>12} {'seconds':>8}"]
    for e in entries:
        lines.append(f"{e.name:<18} {'ok' if e.passed else 'FAIL':<6} {e.report.max_rel_err:>12.3e} {e.seconds:>8.2f}")
        for failure in e.report.failures():
            lines.append(f"  {failure.name}: {failure.max_rel_err:.3e} non_finite={failure.non_finite}")
    total = sum(e.seconds for e in entries)
    passed = sum(e.passed for e in entries)
    lines.append(f"{passed}/{len(entries)} passed in {total:.1f}s")
    return "\n".join(lines)
