# dpmn/priors/recognizer.py
'''Deterministic template recognizer over the fixed cell layout'''

import logging
from dataclasses import dataclass

import numpy as np

from dpmn.diffcore.node import ShapeError
from dpmn.priors.atlas import GlyphAtlas, default_atlas
from dpmn.priors.binarize import binarize
from dpmn.priors.label import TextLabel
from dpmn.priors.render import GRID_H, GRID_W, N_CELLS, cell_interior, downscale_cell

logger = logging.getLogger(__name__)

CELL_THRESHOLD = 0.55
BLANK = "_"


@dataclass(frozen=True)
class Recognition:
    label: TextLabel
    cell_chars: tuple[str, ...]  # ends with BLANK when a cell failed the threshold
    cell_scores: tuple[float, ...]


def match_scores(cell: np.ndarray, atlas: GlyphAtlas) -> np.ndarray:
    """Ink IoU |cell ∧ glyph| / |cell ∨ glyph| against every glyph, charset order; 0 for a blank cell."""
    stack = atlas.stack
    cell = cell.astype(bool)[None]
    intersection = (stack & cell).sum(axis=(1, 2))
    union = (stack | cell).sum(axis=(1, 2))
    return np.where(union > 0, intersection / np.maximum(union, 1), 0.0)


def recognize(image: np.ndarray, atlas: GlyphAtlas | None = None) -> Recognition:
    image = np.asarray(image)
    if image.shape != (GRID_H, GRID_W, 3):
        raise ShapeError("recognize", image.shape, (GRID_H, GRID_W, 3))
    atlas = atlas or default_atlas()
    mask = binarize(image)[..., 0]
    chars: list[str] = []
    scores: list[float] = []
    for k in range(N_CELLS):
        rows, cols = cell_interior(k)
        cell_scores = match_scores(downscale_cell(mask[rows, cols]), atlas)
        best = int(np.argmax(cell_scores))  # first maximum = charset order
        score = float(cell_scores[best])
        scores.append(score)
        if score < CELL_THRESHOLD:
            chars.append(BLANK)
            break
        chars.append(atlas.charset[best].upper())
    text = "".join(c for c in chars if c != BLANK)
    return Recognition(label=TextLabel(text), cell_chars=tuple(chars), cell_scores=tuple(scores))
