# dpmn/netblocks/attention.py
'''Dynamic-window multi-head cross attention (plain and shifted) and the LeFF block'''

import logging
from functools import lru_cache

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.module import Module
from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.netblocks.layers import DepthwiseConv3x3, LayerNorm, Linear
from dpmn.schemas.config import NetConfig

logger = logging.getLogger(__name__)

PARTITION = "(nh w1) (nw w2) (h d) -> (nh nw) h (w1 w2) d"
MERGE = "(nh nw) h (w1 w2) d -> (nh w1) (nw w2) (h d)"


@lru_cache(maxsize=32)
def shifted_window_mask(grid: tuple[int, int], window: int, shift: int) -> np.ndarray:
    """Additive 0/-inf mask, shape (n_windows, 1, w², w²), for a grid rolled by -shift.

    Tokens may only attend to tokens that were contiguous before the roll.
    """
    h, w = grid
    region = np.zeros((h, w), dtype=np.int64)
    bands = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    label = 0
    for rows in bands:
        for cols in bands:
            region[rows, cols] = label
            label += 1
    windows = region.reshape(h // window, window, w // window, window).transpose(0, 2, 1, 3)
    windows = windows.reshape(-1, window * window)
    same = windows[:, :, None] == windows[:, None, :]
    mask = np.where(same, 0.0, -np.inf)
    return mask[:, None, :, :]


class WindowCrossAttention(Module):
    """Queries from prior tokens, keys/values from image tokens, one head group per window size.

    Each group owns D/G channels and H/G heads, attends inside non-overlapping
    w×w windows, and is reweighted by a softmax gate over the pooled group
    outputs before the channel concat and output projection.
    """

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, shifted: bool = False):
        super().__init__()
        self.cfg = cfg
        self.shifted = shifted
        dim = cfg.embed_dim
        self.q_proj = self.add_module("q_proj", Linear(rng, dim, dim))
        self.k_proj = self.add_module("k_proj", Linear(rng, dim, dim))
        self.v_proj = self.add_module("v_proj", Linear(rng, dim, dim))
        self.out_proj = self.add_module("out_proj", Linear(rng, dim, dim))
        if cfg.gated:
            self.gate_fc1 = self.add_module("gate_fc1", Linear(rng, cfg.group_dim, cfg.group_dim))
            self.gate_fc2 = self.add_module("gate_fc2", Linear(rng, cfg.group_dim, 1))
        self.scale = 1.0 / np.sqrt(cfg.head_dim)
        # inspection only; leave off when the module is shared by evaluation threads
        self.record_attention = False
        self.last_attention: dict[int, np.ndarray] = {}
        self.last_gate: np.ndarray | None = None

    def _check_grid(self, tokens: DiffNode) -> None:
        if tokens.ndim != 3 or tokens.shape[2] != self.cfg.embed_dim:
            raise ShapeError("window_cross_attention", tokens.shape, detail=f"expected h×w×{self.cfg.embed_dim}")
        for window in self.cfg.window_sizes:
            if tokens.shape[0] % window or tokens.shape[1] % window:
                raise ShapeError("window_cross_attention", tokens.shape, window,
                                 detail="window size must divide the token grid")

    def _attend(self, q: DiffNode, k: DiffNode, v: DiffNode, window: int) -> DiffNode:
        h, w, _ = q.shape
        heads = self.cfg.heads_per_group
        shift = window // 2 if self.shifted else 0
        if shift:
            q, k, v = (ops.roll(t, (-shift, -shift), (0, 1)) for t in (q, k, v))
        qw, kw, vw = (ops.rearrange(t, PARTITION, w1=window, w2=window, h=heads) for t in (q, k, v))
        scores = ops.mul(ops.matmul(qw, ops.transpose(kw, (0, 1, 3, 2))), self.scale)
        mask = shifted_window_mask((h, w), window, shift) if shift else None
        attention = ops.softmax(scores, mask=mask)
        if self.record_attention:
            self.last_attention[window] = attention.values.copy()
        out = ops.rearrange(ops.matmul(attention, vw), MERGE, nh=h // window, w1=window, w2=window)
        if shift:
            out = ops.roll(out, (shift, shift), (0, 1))
        return out

    def _gate(self, groups: list[DiffNode]) -> list[DiffNode]:
        logits = []
        for out in groups:
            pooled = ops.reduce_mean(out, axis=(0, 1))
            logits.append(self.gate_fc2(ops.gelu(self.gate_fc1(pooled))))
        weights = ops.softmax(ops.concat(logits, axis=-1))
        if self.record_attention:
            self.last_gate = weights.values[0].copy()
        n = len(groups)
        return [ops.mul(out, ops.mul(ops.getitem(weights, (0, g)), float(n))) for g, out in enumerate(groups)]

    def __call__(self, prior_tokens, image_tokens) -> DiffNode:
        prior_tokens, image_tokens = ops.as_node(prior_tokens), ops.as_node(image_tokens)
        self._check_grid(prior_tokens)
        if prior_tokens.shape != image_tokens.shape:
            raise ShapeError("window_cross_attention", prior_tokens.shape, image_tokens.shape)
        q = self.q_proj(prior_tokens)
        k = self.k_proj(image_tokens)
        v = self.v_proj(image_tokens)
        dg = self.cfg.group_dim
        groups = []
        for g, window in enumerate(self.cfg.window_sizes):
            channels = (slice(None), slice(None), slice(g * dg, (g + 1) * dg))
            groups.append(self._attend(q[channels], k[channels], v[channels], window))
        if self.cfg.gated:
            groups = self._gate(groups)
        merged = groups[0] if len(groups) == 1 else ops.concat(groups, axis=-1)
        return self.out_proj(merged)


class LeFF(Module):
    """Linear D→rD, gelu, 3×3 depthwise conv on the token grid, gelu, linear rD→D."""

    def __init__(self, rng: np.random.Generator, dim: int, ratio: int = 4):
        super().__init__()
        hidden = dim * ratio
        self.fc1 = self.add_module("fc1", Linear(rng, dim, hidden))
        self.dwconv = self.add_module("dwconv", DepthwiseConv3x3(rng, hidden))
        self.fc2 = self.add_module("fc2", Linear(rng, hidden, dim))

    def __call__(self, tokens) -> DiffNode:
        x = ops.gelu(self.fc1(tokens))
        x = ops.gelu(self.dwconv(x))
        return self.fc2(x)


class CrossAttentionStage(Module):
    """One half of the PGRM transformer block.

    x = MCA(LN(prior), LN(image)) + LN(image), then x + LeFF(LN(x)).
    """

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, shifted: bool):
        super().__init__()
        self.ln_residual = cfg.ln_residual
        dim = cfg.embed_dim
        self.norm_prior = self.add_module("norm_prior", LayerNorm(dim))
        self.norm_image = self.add_module("norm_image", LayerNorm(dim))
        self.attention = self.add_module("attention", WindowCrossAttention(cfg, rng, shifted=shifted))
        self.norm_ffn = self.add_module("norm_ffn", LayerNorm(dim))
        self.leff = self.add_module("leff", LeFF(rng, dim, cfg.ffn_ratio))

    def __call__(self, prior_tokens, image_tokens) -> DiffNode:
        image_normed = self.norm_image(image_tokens)
        attended = self.attention(self.norm_prior(prior_tokens), image_normed)
        x = ops.add(attended, image_normed if self.ln_residual else image_tokens)
        return ops.add(x, self.leff(self.norm_ffn(x)))
