# dpmn/priors/generator.py
'''Prior generator: both image-level priors from one SR estimate'''

from dataclasses import dataclass
from enum import Enum

import numpy as np

from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.priors.atlas import GlyphAtlas
from dpmn.priors.binarize import binarize
from dpmn.priors.recognizer import recognize
from dpmn.priors.render import GRID_H, GRID_W, render_graphic_prior


class PriorKind(Enum):
    GRAPHIC = "graphic"
    STRUCTURE = "structure"
    CONCAT = "concat"  # structure mask stacked on the graphic render


@dataclass(frozen=True)
class PriorPair:
    graphic: np.ndarray  # 32×128×2, P_G
    structure: np.ndarray  # 32×128×1, P_S

    def __post_init__(self):
        if self.graphic.shape != (GRID_H, GRID_W, 2):
            raise ShapeError("PriorPair.graphic", self.graphic.shape, (GRID_H, GRID_W, 2))
        if self.structure.shape != (GRID_H, GRID_W, 1):
            raise ShapeError("PriorPair.structure", self.structure.shape, (GRID_H, GRID_W, 1))

    def select(self, kind: PriorKind) -> np.ndarray:
        if kind is PriorKind.GRAPHIC:
            return self.graphic
        if kind is PriorKind.STRUCTURE:
            return self.structure
        return np.concatenate([self.structure, self.graphic], axis=-1)


def make_priors(image: np.ndarray | DiffNode, atlas: GlyphAtlas | None = None) -> PriorPair:
    """Graphic = Ren(Rec(image)), structure = Bin(image); no gradient flows through either."""
    pixels = image.values if isinstance(image, DiffNode) else np.asarray(image)
    pixels = np.clip(pixels.astype(np.float64), 0.0, 1.0)
    structure = binarize(pixels)
    graphic = render_graphic_prior(recognize(pixels, atlas).label, atlas)
    return PriorPair(graphic=graphic, structure=structure)
