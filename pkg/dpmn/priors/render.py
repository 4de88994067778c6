# dpmn/priors/render.py
'''Fixed 8-cell monospace layout and the two-channel graphic prior renderer'''

import numpy as np

from dpmn.diffcore.node import ShapeError
from dpmn.priors.atlas import GLYPH_COLS, GLYPH_ROWS, GlyphAtlas, default_atlas
from dpmn.priors.label import LabelError, TextLabel, as_label

GRID_H, GRID_W = 32, 128
CELL = 16
N_CELLS = GRID_W // CELL
CELL_TOP = (GRID_H - CELL) // 2  # cells occupy rows 8..23
MARGIN = 1
INTERIOR = CELL - 2 * MARGIN

# nearest-neighbour index maps from the 14×14 cell interior onto the 7×5 glyph
ROW_MAP = (np.arange(INTERIOR) * GLYPH_ROWS) // INTERIOR
COL_MAP = (np.arange(INTERIOR) * GLYPH_COLS) // INTERIOR


def cell_interior(k: int) -> tuple[slice, slice]:
    top = CELL_TOP + MARGIN
    left = k * CELL + MARGIN
    return slice(top, top + INTERIOR), slice(left, left + INTERIOR)


def text_mask(text: str, atlas: GlyphAtlas | None = None) -> np.ndarray:
    """Rasterize glyphs exactly as named (case-sensitive) into a 32×128 {0,1} mask."""
    atlas = atlas or default_atlas()
    if len(text) > N_CELLS:
        raise LabelError(f"{text!r} does not fit in {N_CELLS} cells")
    mask = np.zeros((GRID_H, GRID_W), dtype=np.uint8)
    for k, char in enumerate(text):
        if char not in atlas.glyphs:
            raise LabelError(f"character {char!r} is not in the glyph atlas")
        rows, cols = cell_interior(k)
        mask[rows, cols] = atlas[char][np.ix_(ROW_MAP, COL_MAP)]
    return mask


def render_graphic_prior(label: TextLabel | str, atlas: GlyphAtlas | None = None) -> np.ndarray:
    """32×128×2 prior: channel 0 in uppercase glyphs, channel 1 in lowercase glyphs."""
    label = as_label(label)
    upper = text_mask(label.text.upper(), atlas)
    lower = text_mask(label.text.lower(), atlas)
    return np.stack([upper, lower], axis=-1).astype(np.float64)


def downscale_cell(interior: np.ndarray) -> np.ndarray:
    """Block-majority reduction of a 14×14 binary interior back to 7×5."""
    if interior.shape != (INTERIOR, INTERIOR):
        raise ShapeError("downscale_cell", interior.shape, (INTERIOR, INTERIOR))
    row_sums = interior.reshape(GLYPH_ROWS, INTERIOR // GLYPH_ROWS, INTERIOR).sum(axis=1)
    starts = np.flatnonzero(np.diff(COL_MAP, prepend=-1))
    block_sums = np.add.reduceat(row_sums, starts, axis=1)
    counts = (INTERIOR // GLYPH_ROWS) * np.bincount(COL_MAP)
    return (block_sums / counts) >= 0.5
