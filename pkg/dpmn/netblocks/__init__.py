'''Network blocks: windowed cross attention, PGRM, CMM, TinyPSN and the full model'''

from dpmn.netblocks.attention import CrossAttentionStage, LeFF, WindowCrossAttention, shifted_window_mask
from dpmn.netblocks.cmm import CMM, CMM_VARIANTS, ConcatCMM, SequentialCMM, UNetCMM, build_cmm
from dpmn.netblocks.layers import Conv2d, DepthwiseConv3x3, LayerNorm, Linear, PatchEmbed, ResidualConvBlock
from dpmn.netblocks.model import DPMN, ForwardResult, dpmn_forward, fuse, initial_estimate
from dpmn.netblocks.persistence import load_dpmn, load_psn, read_manifest, save_model
from dpmn.netblocks.pgrm import PGRM, expand_prior
from dpmn.netblocks.psn import TinyPSN, tiny_psn_forward

__all__ = [
    "CMM",
    "CMM_VARIANTS",
    "DPMN",
    "PGRM",
    "ConcatCMM",
    "Conv2d",
    "CrossAttentionStage",
    "DepthwiseConv3x3",
    "ForwardResult",
    "LayerNorm",
    "LeFF",
    "Linear",
    "PatchEmbed",
    "ResidualConvBlock",
    "SequentialCMM",
    "TinyPSN",
    "UNetCMM",
    "WindowCrossAttention",
    "build_cmm",
    "dpmn_forward",
    "expand_prior",
    "fuse",
    "initial_estimate",
    "load_dpmn",
    "load_psn",
    "read_manifest",
    "save_model",
    "shifted_window_mask",
    "tiny_psn_forward",
]
