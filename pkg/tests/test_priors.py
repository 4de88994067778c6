import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dpmn.diffcore import ops
from dpmn.diffcore.node import DiffNode, ShapeError, backward
from dpmn.priors.atlas import CHARSET, AtlasFormatError, default_atlas, parse_atlas
from dpmn.priors.binarize import binarize, expand_mask, otsu_threshold
from dpmn.priors.generator import PriorKind, PriorPair, make_priors
from dpmn.priors.label import LABEL_CHARSET, LabelError, TextLabel
from dpmn.priors.recognizer import BLANK, match_scores, recognize
from dpmn.priors.render import render_graphic_prior, text_mask
from dpmn.synthdata.dataset import random_label
from dpmn.synthdata.render import render_hr


def test_atlas_has_every_character_once():
    atlas = default_atlas()
    assert atlas.charset == CHARSET
    assert atlas.stack.shape == (62, 7, 5)
    assert len({g.tobytes() for g in atlas.stack}) == 62


def test_atlas_parse_errors():
    line = "A " + "1" * 35
    with pytest.raises(AtlasFormatError):
        parse_atlas(line + "\n" + line)
    with pytest.raises(AtlasFormatError):
        parse_atlas("A 0101")
    with pytest.raises(AtlasFormatError):
        parse_atlas(line)  # everything but 'A' missing


def test_text_label_validation():
    assert TextLabel("AB12").matches("ab12")
    assert len(TextLabel("")) == 0
    with pytest.raises(LabelError):
        TextLabel("ABCDEFGHI")
    with pytest.raises(LabelError):
        TextLabel("ab")


def test_graphic_prior_channels_are_upper_and_lower_renders():
    prior = render_graphic_prior("K9Z")
    assert prior.shape == (32, 128, 2)
    assert set(np.unique(prior)) <= {0.0, 1.0}
    assert_array_equal(prior[..., 0], text_mask("K9Z"))
    assert_array_equal(prior[..., 1], text_mask("k9z"))
    # nothing drawn outside the label's cells
    assert not prior[:, 3 * 16:, :].any()


def test_otsu_splits_two_levels():
    values = np.concatenate([np.full(100, 0.2), np.full(50, 0.8)])
    t = otsu_threshold(values)
    assert int(0.2 * 256) < t <= int(0.8 * 256)


def test_binarize_constant_image_is_empty():
    assert not binarize(np.full((32, 128, 3), 0.4)).any()


def test_binarize_recovers_rendered_strokes():
    hr = render_hr("HELLO", style_seed=11)
    mask = binarize(hr)
    assert mask.shape == (32, 128, 1)
    assert_array_equal(mask[..., 0], text_mask("HELLO"))


@pytest.mark.parametrize("seed", range(5))
def test_binarize_is_idempotent_on_its_expansion(seed):
    rng = np.random.default_rng(seed)
    noisy = np.clip(render_hr(random_label(rng), style_seed=seed) + rng.normal(0, 0.1, (32, 128, 3)), 0, 1)
    mask = binarize(noisy)
    assert mask.any()
    assert_array_equal(binarize(expand_mask(mask)), mask)


def test_recognize_render_identity_sweep():
    rng = np.random.default_rng(2024)
    for i in range(500):
        label = random_label(rng)
        result = recognize(render_hr(label, style_seed=i))
        assert result.label.text == label, (label, result.cell_chars)


def test_match_scores_are_ink_iou():
    atlas = default_atlas()
    assert not match_scores(np.zeros((7, 5), dtype=bool), atlas).any()
    glyph = atlas["A"]
    scores = match_scores(glyph, atlas)
    assert scores[atlas.charset.index("A")] == 1.0
    half = glyph.copy()
    half[:, :2] = 0  # drop ink, IoU becomes kept / original
    kept = match_scores(half, atlas)[atlas.charset.index("A")]
    assert kept == half.sum() / glyph.sum()


def test_recognize_survives_mild_noise():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        noisy = np.clip(render_hr("AB", style_seed=seed) + rng.normal(0, 0.05, (32, 128, 3)), 0, 1)
        assert recognize(noisy).label.text == "AB", seed


def test_single_characters_render_distinct_priors():
    renders = {render_graphic_prior(c).tobytes() for c in LABEL_CHARSET}
    assert len(renders) == len(LABEL_CHARSET)


def test_recognize_stops_at_first_blank_cell():
    result = recognize(np.zeros((32, 128, 3)))
    assert result.label.text == ""
    assert result.cell_chars == (BLANK,)


def test_recognize_rejects_other_sizes():
    with pytest.raises(ShapeError):
        recognize(np.zeros((16, 64, 3)))


def test_make_priors_from_clean_render():
    pair = make_priors(render_hr("A1B2", style_seed=5))
    assert_array_equal(pair.structure[..., 0], text_mask("A1B2"))
    assert_array_equal(pair.graphic, render_graphic_prior("A1B2"))
    concat = pair.select(PriorKind.CONCAT)
    assert concat.shape == (32, 128, 3)
    assert_array_equal(concat[..., :1], pair.structure)


def test_prior_pair_shapes_are_checked():
    with pytest.raises(ShapeError):
        PriorPair(graphic=np.zeros((32, 128, 1)), structure=np.zeros((32, 128, 1)))


def test_priors_carry_no_gradient():
    image = DiffNode(render_hr("Q7", style_seed=1), requires_grad=True)
    pair = make_priors(image)
    loss = ops.add(ops.reduce_sum(ops.mul(image, 0.0)), ops.reduce_sum(pair.structure))
    backward(loss)
    assert not image.grad.any()


def test_label_charset_is_uppercase_and_digits():
    assert LABEL_CHARSET == "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
