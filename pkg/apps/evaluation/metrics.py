"""PSNR and SSIM scoring of result rasters against references."""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from apps.core.exceptions import DimensionError, EvaluationError
from apps.imaging.files import list_images, load_image
from apps.imaging.ops import bicubic_upscale, check_image, quantize

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0


def _pair(a, b, quantized, crop):
    a = check_image(a).astype(np.float64)
    b = check_image(b).astype(np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"Image shapes differ: {a.shape} vs {b.shape}")
    if crop:
        a = a[crop:-crop, crop:-crop]
        b = b[crop:-crop, crop:-crop]
    if quantized:
        a, b = quantize(a), quantize(b)
    return a, b


def psnr(a, b, quantized=False, crop=0):
    """10·log10(1 / MSE) in dB; ``math.inf`` for identical images."""
    a, b = _pair(a, b, quantized, crop)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(DYNAMIC_RANGE**2 / mse))


def luma(img):
    return np.asarray(img, dtype=np.float64) @ LUMA_WEIGHTS


def ssim_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    offsets = np.arange(size) - (size - 1) / 2
    g = np.exp(-(offsets**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, quantized=False, crop=0):
    """Mean SSIM over the valid 11×11 windows of the luma channel."""
    a, b = _pair(a, b, quantized, crop)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise DimensionError(
            f"SSIM needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {a.shape[:2]}"
        )
    x, y = luma(a), luma(b)
    window = ssim_window()
    margin = SSIM_WINDOW // 2

    def local_mean(img):
        return ndimage.correlate(img, window, mode="reflect")[margin:-margin, margin:-margin]

    mu_x, mu_y = local_mean(x), local_mean(y)
    var_x = local_mean(x * x) - mu_x * mu_x
    var_y = local_mean(y * y) - mu_y * mu_y
    cov = local_mean(x * y) - mu_x * mu_y

    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    per_image: list = field(default_factory=list)

    def to_dict(self):
        """JSON-ready dict; an infinite PSNR is written as the string ``"inf"``."""

        def plain(value):
            return "inf" if isinstance(value, float) and math.isinf(value) else value

        data = asdict(self)
        data["psnr_db"] = plain(data["psnr_db"])
        data["per_image"] = [
            {key: plain(value) for key, value in row.items()} for row in data["per_image"]
        ]
        return data


def evaluate_pairs(pairs, quantized=False, crop=0):
    """Score ``(name, result, reference)`` triples; aggregates are plain means."""
    rows = [
        {
            "name": name,
            "psnr_db": psnr(result, reference, quantized, crop),
            "ssim": ssim(result, reference, quantized, crop),
        }
        for name, result, reference in pairs
    ]
    if not rows:
        raise EvaluationError("Nothing to evaluate")
    return MetricReport(
        psnr_db=float(np.mean([row["psnr_db"] for row in rows])),
        ssim=float(np.mean([row["ssim"] for row in rows])),
        per_image=rows,
    )


def _match(results_dir, references_dir, suffix=""):
    results = {p.stem.removesuffix(suffix) if suffix else p.stem: p for p in list_images(results_dir)}
    references = {p.stem: p for p in list_images(references_dir)}
    unmatched_results = sorted(str(results[k]) for k in results.keys() - references.keys())
    unmatched_refs = sorted(str(references[k]) for k in references.keys() - results.keys())
    if unmatched_results or unmatched_refs:
        raise EvaluationError(
            "Result and reference names do not match",
            unmatched_results=unmatched_results,
            unmatched_references=unmatched_refs,
        )
    return [(name, results[name], references[name]) for name in sorted(results)]


def evaluate_directories(results_dir, references_dir, quantized=True, crop=0, suffix=""):
    """
    Pair files by name (``suffix`` stripped from result stems) and score them.
    Any unmatched file on either side is an error listing all of them.
    """
    matched = _match(Path(results_dir), Path(references_dir), suffix)
    logger.info(f"Evaluating {len(matched)} image pairs")
    return evaluate_pairs(
        ((name, load_image(r), load_image(ref)) for name, r, ref in matched),
        quantized=quantized,
        crop=crop,
    )


def bicubic_baseline(lr_dir, references_dir, scale, quantized=True, crop=0):
    """Scores of plain bicubic upscaling of the LR inputs."""
    matched = _match(Path(lr_dir), Path(references_dir))
    return evaluate_pairs(
        ((name, bicubic_upscale(load_image(lr), scale), load_image(ref)) for name, lr, ref in matched),
        quantized=quantized,
        crop=crop,
    )
