# dpmn/synthdata/ppm.py
'''Binary PPM (P6, maxval 255) images and 8-bit quantization'''

import re
from pathlib import Path

import numpy as np

from dpmn.errors import DPMNError

_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def to_float(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 255.0


def quantize(image: np.ndarray) -> np.ndarray:
    """Float image → the float image its stored 8-bit form decodes to."""
    return to_float(to_uint8(image))


def encode_ppm(image: np.ndarray) -> bytes:
    pixels = image if image.dtype == np.uint8 else to_uint8(image)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise PPMFormatError(f"PPM needs an H×W×3 image, got {pixels.shape}")
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(pixels).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    match = _HEADER.match(data)
    if match is None:
        raise PPMFormatError("not a binary P6 PPM")
    w, h, maxval = (int(g) for g in match.groups())
    if maxval != 255:
        raise PPMFormatError(f"unsupported maxval {maxval}")
    body = data[match.end():]
    if len(body) != w * h * 3:
        raise PPMFormatError(f"expected {w * h * 3} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(image))
    return path


def read_ppm(path: str | Path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


class PPMFormatError(DPMNError):
    pass
