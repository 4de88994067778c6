# dpmn/netblocks/pgrm.py
'''Prior-guided refinement module: one prior-conditioned refinement step'''

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module
from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.netblocks.attention import CrossAttentionStage
from dpmn.netblocks.layers import Conv2d, PatchEmbed
from dpmn.priors.generator import PriorKind
from dpmn.schemas.config import NetConfig

# channels the prior embedding sees after expansion
PRIOR_CHANNELS = {PriorKind.GRAPHIC: 2, PriorKind.STRUCTURE: 3, PriorKind.CONCAT: 3}


def expand_prior(prior: np.ndarray | DiffNode, kind: PriorKind) -> DiffNode:
    """Replicate a one-channel structure mask to three channels; other priors pass through."""
    prior = ops.as_node(prior)
    expected = {PriorKind.GRAPHIC: 2, PriorKind.STRUCTURE: 1, PriorKind.CONCAT: 3}[kind]
    if prior.ndim != 3 or prior.shape[2] != expected:
        raise ShapeError("expand_prior", prior.shape, detail=f"{kind.value} prior needs {expected} channels")
    if kind is PriorKind.STRUCTURE:
        return ops.concat([prior, prior, prior], axis=-1)
    return prior


class PGRM(Module):
    def __init__(self, cfg: NetConfig, rng: np.random.Generator, kind: PriorKind):
        super().__init__()
        self.cfg = cfg
        self.kind = kind
        dim = cfg.embed_dim
        self.image_embed = self.add_module("image_embed", PatchEmbed(rng, 3, dim, cfg.patch))
        self.prior_embed = self.add_module("prior_embed", PatchEmbed(rng, PRIOR_CHANNELS[kind], dim, cfg.patch))
        self.stage_window = self.add_module("stage_window", CrossAttentionStage(cfg, rng, shifted=False))
        self.stage_shifted = self.add_module("stage_shifted", CrossAttentionStage(cfg, rng, shifted=True))
        self.tail_conv1 = self.add_module("tail_conv1", Conv2d(rng, dim, dim))
        self.tail_conv2 = self.add_module("tail_conv2", Conv2d(rng, dim, 3 * cfg.patch * cfg.patch))

    def __call__(self, image, prior) -> DiffNode:
        """(2h×2w×3 image, matching prior) → refined 2h×2w×3 image in (0, 1)."""
        image = ops.as_node(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeError("pgrm", image.shape, detail="expected an H×W×3 image")
        prior = expand_prior(prior, self.kind)
        if prior.shape[:2] != image.shape[:2]:
            raise ShapeError("pgrm", image.shape, prior.shape, detail="prior and image sizes differ")
        prior_tokens = self.prior_embed(prior)
        image_tokens = self.image_embed(image)
        x = self.stage_window(prior_tokens, image_tokens)
        x = self.stage_shifted(prior_tokens, x)
        x = self.tail_conv2(ops.gelu(self.tail_conv1(x)))
        return ops.sigmoid(ops.pixel_shuffle(x, self.cfg.patch))
