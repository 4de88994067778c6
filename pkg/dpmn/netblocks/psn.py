# dpmn/netblocks/psn.py
'''TinyPSN: the small baseline SR network whose output the refinement starts from'''

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module
from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.netblocks.layers import Conv2d, ResidualConvBlock

SCALE = 2


class TinyPSN(Module):
    """conv 3→w, two residual blocks, conv w→12, pixel shuffle ×2, sigmoid."""

    def __init__(self, rng: np.random.Generator, width: int = 32):
        super().__init__()
        self.width = width
        self.head = self.add_module("head", Conv2d(rng, 3, width))
        self.block1 = self.add_module("block1", ResidualConvBlock(rng, width))
        self.block2 = self.add_module("block2", ResidualConvBlock(rng, width))
        self.tail = self.add_module("tail", Conv2d(rng, width, 3 * SCALE * SCALE))

    def __call__(self, lr) -> DiffNode:
        lr = ops.as_node(lr)
        if lr.ndim != 3 or lr.shape[2] != 3:
            raise ShapeError("tiny_psn", lr.shape, detail="expected an h×w×3 image")
        x = ops.gelu(self.head(lr))
        x = self.block2(self.block1(x))
        return ops.sigmoid(ops.pixel_shuffle(self.tail(x), SCALE))

    @property
    def frozen(self) -> bool:
        params = self.parameters()
        return bool(params) and all(p.frozen for p in params)


def tiny_psn_forward(psn: TinyPSN, lr) -> DiffNode:
    return psn(lr)
