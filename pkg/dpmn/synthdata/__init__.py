'''Deterministic synthetic text-image benchmark'''

from dpmn.synthdata.dataset import (
    MANIFEST_HEADER,
    DatasetExistsError,
    DatasetFormatError,
    DatasetManifest,
    build_dataset,
    draw_labels,
    generate_sample,
    load_dataset,
    read_manifest,
)
from dpmn.synthdata.degrade import bicubic_upsample, box_downsample, degrade, degrade_to_lr, gaussian_blur
from dpmn.synthdata.ppm import PPMFormatError, quantize, read_ppm, write_ppm
from dpmn.synthdata.render import render_hr

__all__ = [
    "MANIFEST_HEADER",
    "DatasetExistsError",
    "DatasetFormatError",
    "DatasetManifest",
    "PPMFormatError",
    "bicubic_upsample",
    "box_downsample",
    "build_dataset",
    "degrade",
    "degrade_to_lr",
    "draw_labels",
    "gaussian_blur",
    "generate_sample",
    "load_dataset",
    "quantize",
    "read_manifest",
    "read_ppm",
    "render_hr",
    "write_ppm",
]
