# dpmn/priors/atlas.py
'''5×7 glyph atlas shared by the renderer and the template recognizer'''

import logging
import string
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from dpmn.errors import DPMNError

logger = logging.getLogger(__name__)

GLYPH_ROWS = 7
GLYPH_COLS = 5
CHARSET = string.ascii_uppercase + string.ascii_lowercase + string.digits
ATLAS_PATH = Path(__file__).with_name("glyphs_5x7.txt")


@dataclass(frozen=True)
class GlyphAtlas:
    glyphs: dict[str, np.ndarray]
    charset: str = CHARSET

    def __post_init__(self):
        missing = [c for c in self.charset if c not in self.glyphs]
        if missing:
            raise AtlasFormatError(f"atlas lacks glyphs for {''.join(missing)!r}")
        seen: dict[bytes, str] = {}
        for char in self.charset:
            bitmap = self.glyphs[char]
            if bitmap.shape != (GLYPH_ROWS, GLYPH_COLS):
                raise AtlasFormatError(f"glyph {char!r} has shape {bitmap.shape}")
            if not np.isin(bitmap, (0, 1)).all():
                raise AtlasFormatError(f"glyph {char!r} is not binary")
            key = bitmap.astype(np.uint8).tobytes()
            if key in seen:
                raise AtlasFormatError(f"glyphs {seen[key]!r} and {char!r} are identical")
            seen[key] = char

    def __getitem__(self, char: str) -> np.ndarray:
        return self.glyphs[char]

    @property
    def stack(self) -> np.ndarray:
        """All glyphs in charset order, shape (62, 7, 5), dtype bool."""
        return np.stack([self.glyphs[c] for c in self.charset]).astype(bool)


def parse_atlas(text: str) -> GlyphAtlas:
    glyphs: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or len(parts[0]) != 1:
            raise AtlasFormatError(f"line {line_no}: expected '<char> <35 bits>'")
        char, bits = parts
        if len(bits) != GLYPH_ROWS * GLYPH_COLS or set(bits) - {"0", "1"}:
            raise AtlasFormatError(f"line {line_no}: glyph {char!r} needs 35 binary digits")
        if char in glyphs:
            raise AtlasFormatError(f"line {line_no}: duplicate glyph {char!r}")
        glyphs[char] = np.array([int(b) for b in bits], dtype=np.uint8).reshape(GLYPH_ROWS, GLYPH_COLS)
    return GlyphAtlas(glyphs=glyphs)


def load_atlas(path: str | Path = ATLAS_PATH) -> GlyphAtlas:
    atlas = parse_atlas(Path(path).read_text(encoding="utf-8"))
    logger.debug(f"loaded {len(atlas.glyphs)} glyphs from {path}")
    return atlas


@lru_cache(maxsize=1)
def default_atlas() -> GlyphAtlas:
    return load_atlas(ATLAS_PATH)


class AtlasFormatError(DPMNError):
    pass
