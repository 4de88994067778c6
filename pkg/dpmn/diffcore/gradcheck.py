# dpmn/diffcore/gradcheck.py
'''Central finite-difference verification of analytic gradients'''

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from dpmn.diffcore.module import Parameter
from dpmn.diffcore.node import DiffNode, Precision, backward, get_precision
from dpmn.errors import DPMNError

logger = logging.getLogger(__name__)


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    n_checked: int
    non_finite: bool = False


@dataclass
class GradcheckReport:
    tol: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(not c.non_finite and c.max_rel_err <= self.tol for c in self.checks)

    def failures(self) -> list[ParamCheck]:
        return [c for c in self.checks if c.non_finite or c.max_rel_err > self.tol]


def _named(params: Sequence[Parameter] | Mapping[str, Parameter]) -> list[tuple[str, Parameter]]:
    if isinstance(params, Mapping):
        return list(params.items())
    return [(p.name, p) for p in params]


def gradcheck(
        build_loss: Callable[[list[Parameter]], DiffNode],
        params: Sequence[Parameter] | Mapping[str, Parameter],
        tol: float = 1e-4,
        eps: float = 1e-5,
        max_entries: int = 6,
        seed: int = 0,
        atol: float = 1e-6,
) -> GradcheckReport:
    """Compare backward() against central differences, entry by entry.

    At most ``max_entries`` entries are checked per parameter tensor; the
    relative error is |a - n| / max(|a|, |n|, atol).
    """
    if get_precision() is not Precision.VERIFY:
        raise GradcheckPrecisionError("gradcheck requires verification (fp64) precision")
    named = _named(params)
    plist = [p for _, p in named]
    for param in plist:
        param.node.zero_grad()
    backward(build_loss(plist))
    analytic = {id(p): p.node.grad.copy() for p in plist}

    rng = np.random.default_rng(seed)
    report = GradcheckReport(tol=tol)
    for name, param in named:
        flat = param.node.values.reshape(-1)
        if flat.size <= max_entries:
            indices = np.arange(flat.size)
        else:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst, non_finite = 0.0, False
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            loss_plus = float(build_loss(plist).values)
            flat[i] = original - eps
            loss_minus = float(build_loss(plist).values)
            flat[i] = original
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            if not np.isfinite(numeric):
                non_finite = True
                continue
            exact = float(analytic[id(param)].reshape(-1)[i])
            err = abs(exact - numeric) / max(abs(exact), abs(numeric), atol)
            worst = max(worst, err)
        report.checks.append(ParamCheck(name, worst, len(indices), non_finite))
        if non_finite or worst > tol:
            logger.warning(f"gradcheck {name}: max rel err {worst:.3e} non_finite={non_finite}")
    for param in plist:
        param.node.zero_grad()
    return report


class GradcheckPrecisionError(DPMNError):
    pass
