# dpmn/priors/binarize.py
'''Structure prior: Otsu binarization on luma'''

import numpy as np

from dpmn.diffcore.node import ShapeError
from dpmn.priors.render import GRID_H, GRID_W

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
N_BINS = 256
MIN_LUMA_VARIANCE = 1e-6


def luma(image: np.ndarray) -> np.ndarray:
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ShapeError("luma", image.shape, detail="expected H×W×3 or H×W×1")
    if image.shape[2] == 1:
        return image[..., 0]
    return image @ LUMA_WEIGHTS


def luma_histogram(values: np.ndarray) -> np.ndarray:
    bins = np.minimum((values * N_BINS).astype(np.int64), N_BINS - 1)
    return np.bincount(bins.ravel(), minlength=N_BINS).astype(np.float64)


def otsu_threshold(values: np.ndarray) -> int | None:
    """Bin index t maximizing between-class variance of bins < t vs bins >= t.

    Returns None when every split has zero between-class variance.
    """
    hist = luma_histogram(values)
    prob = hist / hist.sum()
    centers = np.arange(N_BINS, dtype=np.float64)
    w0 = np.cumsum(prob)[:-1]  # class 0 = bins [0, t) for t = 1..255
    mass0 = np.cumsum(prob * centers)[:-1]
    w1 = 1.0 - w0
    total = (prob * centers).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = mass0 / w0
        mu1 = (total - mass0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, 0.0)
    best = int(np.argmax(between))
    if between[best] <= 0.0:
        return None
    return best + 1


def binarize(image: np.ndarray, expected_hw: tuple[int, int] | None = (GRID_H, GRID_W)) -> np.ndarray:
    """H×W×3 image in [0,1] → H×W×1 mask in {0,1}; all zeros for near-constant luma."""
    image = np.asarray(image)
    if expected_hw is not None and image.shape[:2] != tuple(expected_hw):
        raise ShapeError("binarize", image.shape, tuple(expected_hw))
    y = luma(image)
    mask = np.zeros(y.shape + (1,), dtype=np.float64)
    if y.var() < MIN_LUMA_VARIANCE:
        return mask
    t = otsu_threshold(y)
    if t is None:
        return mask
    bins = np.minimum((y * N_BINS).astype(np.int64), N_BINS - 1)
    mask[..., 0] = bins >= t
    return mask


def expand_mask(mask: np.ndarray) -> np.ndarray:
    """Replicate a one-channel mask to three channels."""
    return np.repeat(np.asarray(mask), 3, axis=-1)
