# dpmn/netblocks/layers.py
'''Parameterized building blocks: linear, convolutions, layer norm, patch embedding'''

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module, fan_in_uniform
from dpmn.diffcore.node import DiffNode, ShapeError, current_dtype


def _zeros(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=current_dtype())


def _ones(*shape: int) -> np.ndarray:
    return np.ones(shape, dtype=current_dtype())


class Linear(Module):
    """Token-wise affine map over the last axis, weight stored (in, out)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = self.add_parameter("weight", fan_in_uniform(rng, (d_in, d_out), d_in))
        self.bias = self.add_parameter("bias", _zeros(d_out)) if bias else None

    def __call__(self, x) -> DiffNode:
        x = ops.as_node(x)
        if x.ndim == 1:
            x = ops.reshape(x, (1, x.shape[0]))
        out = ops.matmul(x, self.weight.node)
        if self.bias is not None:
            out = ops.add(out, self.bias.node)
        return out


class Conv2d(Module):
    def __init__(
            self,
            rng: np.random.Generator,
            c_in: int,
            c_out: int,
            kernel: int = 3,
            stride: int = 1,
            padding: int | None = None,
    ):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = self.add_parameter(
            "weight", fan_in_uniform(rng, (kernel, kernel, c_in, c_out), kernel * kernel * c_in)
        )
        self.bias = self.add_parameter("bias", _zeros(c_out))

    def __call__(self, x) -> DiffNode:
        return ops.conv2d(x, self.weight.node, self.bias.node, stride=self.stride, padding=self.padding)


class DepthwiseConv3x3(Module):
    def __init__(self, rng: np.random.Generator, channels: int):
        super().__init__()
        self.weight = self.add_parameter("weight", fan_in_uniform(rng, (3, 3, channels), 9))
        self.bias = self.add_parameter("bias", _zeros(channels))

    def __call__(self, x) -> DiffNode:
        return ops.depthwise_conv2d(x, self.weight.node, self.bias.node)


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gamma = self.add_parameter("gamma", _ones(dim))
        self.beta = self.add_parameter("beta", _zeros(dim))

    def __call__(self, x) -> DiffNode:
        return ops.layernorm(x, self.gamma.node, self.beta.node)


class PatchEmbed(Module):
    """Non-overlapping patch×patch convolution (kernel = stride = patch) into D channels.

    Computed as a pixel unshuffle followed by a token-wise linear map, which is
    the same convolution with its kernel flattened in unshuffle order.
    """

    def __init__(self, rng: np.random.Generator, c_in: int, dim: int, patch: int):
        super().__init__()
        self.c_in, self.patch = c_in, patch
        self.proj = self.add_module("proj", Linear(rng, c_in * patch * patch, dim))

    def __call__(self, image) -> DiffNode:
        image = ops.as_node(image)
        if image.ndim != 3 or image.shape[2] != self.c_in:
            raise ShapeError("patch_embed", image.shape, detail=f"expected {self.c_in} channels")
        h, w, _ = image.shape
        if h % self.patch or w % self.patch:
            raise ShapeError("patch_embed", image.shape, self.patch, detail="patch must divide spatial dims")
        return self.proj(ops.pixel_unshuffle(image, self.patch))


class ResidualConvBlock(Module):
    """x + conv(gelu(conv(x))), channel count preserved."""

    def __init__(self, rng: np.random.Generator, channels: int):
        super().__init__()
        self.conv1 = self.add_module("conv1", Conv2d(rng, channels, channels))
        self.conv2 = self.add_module("conv2", Conv2d(rng, channels, channels))

    def __call__(self, x) -> DiffNode:
        return ops.add(x, self.conv2(ops.gelu(self.conv1(x))))
