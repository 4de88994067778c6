# dpmn/diffcore/node.py
'''Differentiable array node, precision modes and the reverse-mode pass'''

import logging
from contextlib import contextmanager
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

from dpmn.errors import DPMNError

logger = logging.getLogger(__name__)


class Precision(Enum):
    VERIFY = "verify"  # float64, every forward value checked for finiteness
    TRAIN = "train"  # float32


_DTYPES = {Precision.VERIFY: np.float64, Precision.TRAIN: np.float32}
_precision = Precision.VERIFY


def get_precision() -> Precision:
    return _precision


def set_precision(mode: Precision | str) -> None:
    global _precision
    _precision = Precision(mode)
    logger.debug(f"diffcore precision set to {_precision.value}")


def current_dtype() -> type:
    return _DTYPES[_precision]


@contextmanager
def precision(mode: Precision | str) -> Iterator[None]:
    """Temporarily switch the process-wide precision mode."""
    previous = _precision
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


BackwardFn = Callable[[np.ndarray], None]


class DiffNode:
    """An array value in the computation graph plus its accumulated gradient.

    Gradients are allocated lazily; reading ``grad`` before anything has been
    accumulated returns zeros of the value's shape.
    """

    __slots__ = ("values", "_grad", "requires_grad", "parents", "_backward", "op")

    def __init__(
            self,
            values,
            requires_grad: bool = False,
            parents: Sequence["DiffNode"] = (),
            backward_fn: BackwardFn | None = None,
            op: str = "leaf",
    ):
        self.values = np.asarray(values, dtype=current_dtype())
        self._grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self._backward = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.values)
        return self._grad

    def accumulate(self, gradient: np.ndarray) -> None:
        gradient = np.asarray(gradient, dtype=self.values.dtype)
        if gradient.shape != self.values.shape:
            gradient = gradient.reshape(self.values.shape)
        if self._grad is None:
            self._grad = gradient.copy()
        else:
            self._grad += gradient

    def zero_grad(self) -> None:
        self._grad = None

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self) -> str:
        return f"DiffNode(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the catalog lives in ops.py
    def __add__(self, other):
        from dpmn.diffcore import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from dpmn.diffcore import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from dpmn.diffcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from dpmn.diffcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from dpmn.diffcore import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from dpmn.diffcore import ops
        return ops.mul(other, self)

    def __neg__(self):
        from dpmn.diffcore import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from dpmn.diffcore import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from dpmn.diffcore import ops
        return ops.getitem(self, index)


def constant(values) -> DiffNode:
    """Wrap an array or scalar as a node that never receives gradient."""
    if isinstance(values, DiffNode):
        return values
    return DiffNode(values, requires_grad=False, op="const")


def _topological_order(root: DiffNode) -> list[DiffNode]:
    # iterative DFS; parents precede children in the returned list
    visited: set[int] = set()
    order: list[DiffNode] = []
    stack: list[tuple[DiffNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: DiffNode) -> None:
    """Accumulate d(loss)/d(node) into every reachable node that requires grad.

    Leaf gradients accumulate across calls; intermediate gradients are reset
    first so separate backward calls over a shared graph add up linearly.
    """
    if loss.ndim != 0:
        raise NonScalarLossError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if not node.is_leaf:
            node.zero_grad()
    loss.accumulate(np.ones((), dtype=loss.values.dtype))
    for node in reversed(order):
        if node._backward is None or node._grad is None:
            continue
        node._backward(node._grad)


class ShapeError(DPMNError, ValueError):
    def __init__(self, op: str, *dims, detail: str = ""):
        self.op = op
        self.dims = dims
        shapes = ", ".join(str(tuple(d)) if not isinstance(d, int) else str(d) for d in dims)
        message = f"{op}: incompatible dims {shapes}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NonFiniteError(DPMNError, FloatingPointError):
    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: non-finite forward value in verification mode")


class NonScalarLossError(DPMNError, ValueError):
    pass
