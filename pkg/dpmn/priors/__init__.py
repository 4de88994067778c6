'''Structure-mask and graphic-render priors plus the template recognizer'''

from dpmn.priors.atlas import CHARSET, AtlasFormatError, GlyphAtlas, default_atlas, load_atlas
from dpmn.priors.binarize import binarize, expand_mask, luma, otsu_threshold
from dpmn.priors.generator import PriorKind, PriorPair, make_priors
from dpmn.priors.label import LABEL_CHARSET, MAX_LABEL_LENGTH, LabelError, TextLabel
from dpmn.priors.recognizer import BLANK, CELL_THRESHOLD, Recognition, recognize
from dpmn.priors.render import GRID_H, GRID_W, render_graphic_prior, text_mask

__all__ = [
    "BLANK",
    "CELL_THRESHOLD",
    "CHARSET",
    "GRID_H",
    "GRID_W",
    "LABEL_CHARSET",
    "MAX_LABEL_LENGTH",
    "AtlasFormatError",
    "GlyphAtlas",
    "LabelError",
    "PriorKind",
    "PriorPair",
    "Recognition",
    "TextLabel",
    "binarize",
    "default_atlas",
    "expand_mask",
    "load_atlas",
    "luma",
    "make_priors",
    "otsu_threshold",
    "recognize",
    "render_graphic_prior",
    "text_mask",
]
