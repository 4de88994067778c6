# dpmn/losses_metrics/losses.py
'''Pixel + gradient-profile image loss and its per-branch and total sums'''

from typing import Sequence

import numpy as np

from dpmn.diffcore import ops
from dpmn.diffcore.node import DiffNode, ShapeError
from dpmn.schemas.config import LossWeights


def image_grad(image) -> DiffNode:
    """Forward differences, H×W×C → H×W×C×2 (x then y), zero on the trailing border."""
    image = ops.as_node(image)
    if image.ndim != 3:
        raise ShapeError("image_grad", image.shape)
    h, w, c = image.shape
    dx = ops.sub(image[:, 1:, :], image[:, :-1, :])
    dy = ops.sub(image[1:, :, :], image[:-1, :, :])
    dx = ops.concat([dx, np.zeros((h, 1, c))], axis=1)
    dy = ops.concat([dy, np.zeros((1, w, c))], axis=0)
    return ops.concat([ops.reshape(dx, (h, w, c, 1)), ops.reshape(dy, (h, w, c, 1))], axis=-1)


def img_loss(prediction, target, weights: LossWeights | None = None) -> DiffNode:
    """λp·MSE(pixels) + λg·MAE(gradient fields)."""
    weights = weights or LossWeights()
    prediction, target = ops.as_node(prediction), ops.as_node(target)
    if prediction.shape != target.shape:
        raise ShapeError("img_loss", prediction.shape, target.shape)
    diff = ops.sub(prediction, target)
    pixel = ops.reduce_mean(ops.mul(diff, diff))
    profile = ops.reduce_mean(ops.absolute(ops.sub(image_grad(prediction), image_grad(target))))
    return ops.add(ops.mul(pixel, weights.lambda_p), ops.mul(profile, weights.lambda_g))


def branch_loss(images: Sequence, target, weights: LossWeights | None = None) -> DiffNode:
    """Sum of img_loss over every intermediate of one branch."""
    if not images:
        raise ShapeError("branch_loss", detail="a branch needs at least one image")
    total = img_loss(images[0], target, weights)
    for image in images[1:]:
        total = ops.add(total, img_loss(image, target, weights))
    return total


def cmm_loss(i_m, target) -> DiffNode:
    """The fused image against HR with both λ fixed at 1."""
    return img_loss(i_m, target, LossWeights())


def total_loss(cmm, graphic, structure, weights: LossWeights | None = None) -> DiffNode:
    """λC·L_CMM + λG·L_graphic + λS·L_structure; a missing branch contributes nothing."""
    weights = weights or LossWeights()
    total = ops.mul(cmm, weights.lambda_cmm)
    if graphic is not None:
        total = ops.add(total, ops.mul(graphic, weights.lambda_graphic))
    if structure is not None:
        total = ops.add(total, ops.mul(structure, weights.lambda_structure))
    return total
