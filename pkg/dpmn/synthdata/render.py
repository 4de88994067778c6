# dpmn/synthdata/render.py
'''Synthetic HR text images in the fixed 8-cell layout'''

import numpy as np

from dpmn.diffcore.rng import Rng
from dpmn.priors.atlas import GlyphAtlas
from dpmn.priors.binarize import LUMA_WEIGHTS
from dpmn.priors.label import TextLabel, as_label
from dpmn.priors.render import text_mask

BACKGROUND_LUMA = (0.1, 0.4)
FOREGROUND_LUMA = (0.6, 0.95)
MAX_TINT = 0.05


def _tinted(rng: np.random.Generator, luma_range: tuple[float, float]) -> np.ndarray:
    """A colour of the drawn luma plus a tint that leaves luma unchanged."""
    luma = rng.uniform(*luma_range)
    direction = rng.normal(size=3)
    direction -= (direction @ LUMA_WEIGHTS) / (LUMA_WEIGHTS @ LUMA_WEIGHTS) * LUMA_WEIGHTS
    peak = np.abs(direction).max()
    tint = direction / peak * rng.uniform(0.0, MAX_TINT) if peak > 0 else np.zeros(3)
    return luma + tint


def style_colors(style_seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = Rng(style_seed).child("style").generator()
    return _tinted(rng, BACKGROUND_LUMA), _tinted(rng, FOREGROUND_LUMA)


def render_hr(label: TextLabel | str, style_seed: int, atlas: GlyphAtlas | None = None) -> np.ndarray:
    """32×128×3 image: seeded background and foreground colours, uppercase glyphs."""
    label = as_label(label)
    background, foreground = style_colors(style_seed)
    mask = text_mask(label.text, atlas)[..., None].astype(np.float64)
    image = background * (1.0 - mask) + foreground * mask
    return np.clip(image, 0.0, 1.0)
