from .conv import conv_similarity_experiment, default_kernel, default_patches
from .noise import (
    ErrorMetrics,
    characterize_noise,
    compute_error_metrics,
    error_metrics,
    error_metrics_report,
    noise_summary,
    sample_products,
)
from .report import EvalReport
from .robustness import (
    accuracy_report,
    batch_probs,
    confidence_cdf,
    craft_set,
    select_correct,
    transferability_eval,
    whitebox_distortion_report,
)

__all__ = [
    "ErrorMetrics",
    "EvalReport",
    "accuracy_report",
    "batch_probs",
    "characterize_noise",
    "compute_error_metrics",
    "confidence_cdf",
    "conv_similarity_experiment",
    "craft_set",
    "default_kernel",
    "default_patches",
    "error_metrics",
    "error_metrics_report",
    "noise_summary",
    "sample_products",
    "select_correct",
    "transferability_eval",
    "whitebox_distortion_report",
]
