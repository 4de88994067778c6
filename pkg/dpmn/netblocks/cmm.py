# dpmn/netblocks/cmm.py
'''Complementation modulation: fuse the two branch outputs into one image'''

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module
from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.netblocks.layers import Conv2d, Linear, ResidualConvBlock
from dpmn.schemas.config import NetConfig


class Encoder(Module):
    """Six 3×3 convs, c_in→c1→c1(s2)→c2→c2(s2)→c3→c3; returns features at full, half and quarter size."""

    def __init__(self, rng: np.random.Generator, c_in: int, widths: tuple[int, int, int]):
        super().__init__()
        c1, c2, c3 = widths
        specs = [(c_in, c1, 1), (c1, c1, 2), (c1, c2, 1), (c2, c2, 2), (c2, c3, 1), (c3, c3, 1)]
        self.convs = [
            self.add_module(f"conv{i}", Conv2d(rng, cin, cout, stride=stride))
            for i, (cin, cout, stride) in enumerate(specs)
        ]

    def __call__(self, image) -> list[DiffNode]:
        x = ops.as_node(image)
        features = []
        for i, conv in enumerate(self.convs):
            x = ops.gelu(conv(x))
            if i in (0, 2, 5):
                features.append(x)
        return features


class Decoder(Module):
    """Mirror of the encoder with nearest upsampling; optional skip inputs at half and full size."""

    def __init__(self, rng: np.random.Generator, c_in: int, widths: tuple[int, int, int], skip_channels=(0, 0)):
        super().__init__()
        c1, c2, c3 = widths
        skip_half, skip_full = skip_channels
        self.conv0 = self.add_module("conv0", Conv2d(rng, c_in, c3))
        self.conv1 = self.add_module("conv1", Conv2d(rng, c3, c2))
        self.conv2 = self.add_module("conv2", Conv2d(rng, c2 + skip_half, c2))
        self.conv3 = self.add_module("conv3", Conv2d(rng, c2, c1))
        self.conv4 = self.add_module("conv4", Conv2d(rng, c1 + skip_full, c1))
        self.out = self.add_module("out", Conv2d(rng, c1, 3))

    def __call__(self, features, skips_half=(), skips_full=()) -> DiffNode:
        x = ops.gelu(self.conv1(ops.gelu(self.conv0(features))))
        x = ops.upsample_nearest(x, 2)
        if skips_half:
            x = ops.concat([x, *skips_half], axis=-1)
        x = ops.gelu(self.conv3(ops.gelu(self.conv2(x))))
        x = ops.upsample_nearest(x, 2)
        if skips_full:
            x = ops.concat([x, *skips_full], axis=-1)
        x = ops.gelu(self.conv4(x))
        return ops.sigmoid(self.out(x))


class ChannelAttention(Module):
    """Global pool → C→C/4→C MLP → sigmoid, one weight per channel."""

    def __init__(self, rng: np.random.Generator, channels: int, reduction: int = 4):
        super().__init__()
        self.fc1 = self.add_module("fc1", Linear(rng, channels, channels // reduction))
        self.fc2 = self.add_module("fc2", Linear(rng, channels // reduction, channels))

    def __call__(self, features) -> DiffNode:
        pooled = ops.global_avg_pool(features)
        weights = ops.sigmoid(self.fc2(ops.gelu(self.fc1(pooled))))
        return ops.reshape(weights, (features.shape[-1],))


def _check_pair(graphic: DiffNode, structure: DiffNode) -> None:
    if graphic.shape != structure.shape or graphic.ndim != 3 or graphic.shape[2] != 3:
        raise ShapeError("cmm", graphic.shape, structure.shape, detail="expected two equal H×W×3 images")


class CMM(Module):
    """Separate encoders, channel-attention modulation F·a + F of the concat, shared decoder."""

    variant = "full"

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        c3 = cfg.cmm_widths[2]
        self.encoder_graphic = self.add_module("encoder_graphic", Encoder(rng, 3, cfg.cmm_widths))
        self.encoder_structure = self.add_module("encoder_structure", Encoder(rng, 3, cfg.cmm_widths))
        self.channel_attention = self.add_module("channel_attention", ChannelAttention(rng, 2 * c3))
        self.decoder = self.add_module("decoder", Decoder(rng, 2 * c3, cfg.cmm_widths))
        self.record_attention = False  # inspection only; leave off when evaluation threads share the module
        self.last_attention: np.ndarray | None = None

    @staticmethod
    def modulate(features, attention) -> DiffNode:
        """CA(F)·F + F; with zero attention this is F itself."""
        return ops.add(ops.mul(features, attention), features)

    def __call__(self, graphic, structure) -> DiffNode:
        graphic, structure = ops.as_node(graphic), ops.as_node(structure)
        _check_pair(graphic, structure)
        f_g = self.encoder_graphic(graphic)[-1]
        f_s = self.encoder_structure(structure)[-1]
        f_m = ops.concat([f_g, f_s], axis=-1)
        attention = self.channel_attention(f_m)
        if self.record_attention:
            self.last_attention = attention.values.copy()
        return self.decoder(self.modulate(f_m, attention))


class ConcatCMM(Module):
    """No channel attention: one encoder over the 6-channel stack, plain decoder."""

    variant = "no_ca"

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        c3 = cfg.cmm_widths[2]
        self.encoder = self.add_module("encoder", Encoder(rng, 6, cfg.cmm_widths))
        self.decoder = self.add_module("decoder", Decoder(rng, c3, cfg.cmm_widths))

    def __call__(self, graphic, structure) -> DiffNode:
        graphic, structure = ops.as_node(graphic), ops.as_node(structure)
        _check_pair(graphic, structure)
        return self.decoder(self.encoder(ops.concat([graphic, structure], axis=-1))[-1])


class UNetCMM(Module):
    """Two encoders whose half- and full-size features skip into the decoder; no channel attention."""

    variant = "unet_like"

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        super().__init__()
        c1, c2, c3 = cfg.cmm_widths
        self.encoder_graphic = self.add_module("encoder_graphic", Encoder(rng, 3, cfg.cmm_widths))
        self.encoder_structure = self.add_module("encoder_structure", Encoder(rng, 3, cfg.cmm_widths))
        self.decoder = self.add_module(
            "decoder", Decoder(rng, 2 * c3, cfg.cmm_widths, skip_channels=(2 * c2, 2 * c1))
        )

    def __call__(self, graphic, structure) -> DiffNode:
        graphic, structure = ops.as_node(graphic), ops.as_node(structure)
        _check_pair(graphic, structure)
        full_g, half_g, quarter_g = self.encoder_graphic(graphic)
        full_s, half_s, quarter_s = self.encoder_structure(structure)
        return self.decoder(
            ops.concat([quarter_g, quarter_s], axis=-1),
            skips_half=(half_g, half_s),
            skips_full=(full_g, full_s),
        )


class SequentialCMM(Module):
    """Full-resolution residual conv blocks over the 6-channel stack."""

    variant = "tsrn_like"

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, n_blocks: int = 3):
        super().__init__()
        c1 = cfg.cmm_widths[0]
        self.head = self.add_module("head", Conv2d(rng, 6, c1))
        self.blocks = [self.add_module(f"block{i}", ResidualConvBlock(rng, c1)) for i in range(n_blocks)]
        self.out = self.add_module("out", Conv2d(rng, c1, 3))

    def __call__(self, graphic, structure) -> DiffNode:
        graphic, structure = ops.as_node(graphic), ops.as_node(structure)
        _check_pair(graphic, structure)
        x = ops.gelu(self.head(ops.concat([graphic, structure], axis=-1)))
        for block in self.blocks:
            x = block(x)
        return ops.sigmoid(self.out(x))


CMM_VARIANTS = {cls.variant: cls for cls in (CMM, ConcatCMM, UNetCMM, SequentialCMM)}


def build_cmm(cfg: NetConfig, rng: np.random.Generator) -> Module:
    return CMM_VARIANTS[cfg.cmm_variant](cfg, rng)
