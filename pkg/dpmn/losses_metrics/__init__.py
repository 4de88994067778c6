'''Training losses and evaluation metrics'''

from dpmn.losses_metrics.losses import branch_loss, cmm_loss, image_grad, img_loss, total_loss
from dpmn.losses_metrics.metrics import (
    METRICS_HEADER,
    EmptyEvaluationError,
    aggregate_records,
    psnr,
    read_metrics_csv,
    recognition_accuracy,
    ssim,
    write_metrics_csv,
)

__all__ = [
    "METRICS_HEADER",
    "EmptyEvaluationError",
    "aggregate_records",
    "branch_loss",
    "cmm_loss",
    "image_grad",
    "img_loss",
    "psnr",
    "read_metrics_csv",
    "recognition_accuracy",
    "ssim",
    "total_loss",
    "write_metrics_csv",
]
