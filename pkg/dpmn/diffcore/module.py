# dpmn/diffcore/module.py
'''Learnable parameters and the minimal module container every block builds on'''

import logging
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from dpmn.diffcore.node import DiffNode, current_dtype
from dpmn.diffcore.rng import Rng
from dpmn.errors import DPMNError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Parameter:
    """A learnable leaf node with its Adam moment buffers."""
    name: str
    node: DiffNode
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0
    frozen: bool = False

    @classmethod
    def create(cls, name: str, values) -> "Parameter":
        node = DiffNode(values, requires_grad=True, op="param")
        return cls(
            name=name,
            node=node,
            adam_m=np.zeros_like(node.values),
            adam_v=np.zeros_like(node.values),
        )

    @property
    def values(self) -> np.ndarray:
        return self.node.values

    @property
    def grad(self) -> np.ndarray:
        return self.node.grad

    def assign(self, values) -> None:
        values = np.asarray(values, dtype=self.node.values.dtype)
        if values.shape != self.node.values.shape:
            raise StateDictError(
                f"parameter {self.name}: expected shape {self.node.values.shape}, got {values.shape}"
            )
        self.node.values = values.copy()

    def freeze(self) -> None:
        self.frozen = True
        self.node.requires_grad = False
        self.node.zero_grad()


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(current_dtype())


class Module:
    """Named parameters plus named child modules, addressed by dotted paths."""

    def __init__(self):
        self._parameters: dict[str, Parameter] = {}
        self._children: dict[str, "Module"] = {}

    def add_parameter(self, name: str, values) -> Parameter:
        param = Parameter.create(name, values)
        self._parameters[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if not p.frozen]

    def parameter_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def freeze(self) -> None:
        for param in self.parameters():
            param.freeze()

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.node.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if strict and (missing or unexpected):
            raise StateDictError(f"state dict mismatch: missing={missing} unexpected={unexpected}")
        for name, param in own.items():
            if name in state:
                param.assign(state[name])
        logger.debug(f"loaded {len(own) - len(missing)} tensors into {type(self).__name__}")


def init_rng(rng: Rng | np.random.Generator) -> np.random.Generator:
    return rng.generator() if isinstance(rng, Rng) else rng


class StateDictError(DPMNError):
    pass
