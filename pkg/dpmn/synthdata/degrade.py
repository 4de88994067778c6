# dpmn/synthdata/degrade.py
'''HR → LR degradation (blur, 2× box average, noise) and the bicubic baseline'''

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from dpmn.diffcore.node import ShapeError
from dpmn.diffcore.rng import Rng
from dpmn.schemas.config import DegradationConfig

BLUR_TRUNCATE = 2.0  # kernel radius in sigmas


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Spatial-only Gaussian blur with a 2σ-truncated kernel and mirrored borders."""
    if sigma <= 0.0:
        return np.array(image, dtype=np.float64)
    return gaussian_filter(np.asarray(image, dtype=np.float64), sigma=(sigma, sigma, 0.0),
                           truncate=BLUR_TRUNCATE, mode="mirror")


def box_downsample(image: np.ndarray, factor: int = 2) -> np.ndarray:
    h, w, c = image.shape
    if h % factor or w % factor:
        raise ShapeError("box_downsample", image.shape, factor)
    return image.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))


def degrade(
        hr: np.ndarray,
        blur_sigma: float,
        noise_sigma: float,
        rng: np.random.Generator,
        factor: int = 2,
) -> np.ndarray:
    lr = box_downsample(gaussian_blur(hr, blur_sigma), factor)
    if noise_sigma > 0.0:
        lr = lr + rng.normal(0.0, noise_sigma, size=lr.shape)
    return np.clip(lr, 0.0, 1.0)


def degrade_to_lr(hr: np.ndarray, config: DegradationConfig, tier: str, seed: int) -> np.ndarray:
    """32×128×3 HR → 16×64×3 LR for the tier's blur strength; the noise stream is keyed by ``seed``."""
    rng = Rng(seed).child("noise").generator()
    return degrade(hr, config.blur_sigma(str(tier)), config.noise_sigma, rng, config.downsample)


def bicubic_upsample(lr: np.ndarray, scale: int = 2) -> np.ndarray:
    lr = np.asarray(lr, dtype=np.float64)
    if lr.ndim != 3:
        raise ShapeError("bicubic_upsample", lr.shape)
    return np.clip(zoom(lr, (scale, scale, 1), order=3, mode="mirror"), 0.0, 1.0)
