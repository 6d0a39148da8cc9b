"""Intermediate images of both pipeline paths for visual inspection."""

import logging
from pathlib import Path

import torch
from django.conf import settings

from apps.imaging.files import save_image
from apps.imaging.ops import check_image, predetermined_downscale, quantize
from apps.imaging.sampling import to_array, to_tensor
from apps.networks.generators import draw_noise

logger = logging.getLogger(__name__)


@torch.no_grad()
def intermediates(bundle, x, y, noise_seed=0):
    """
    Rasters of the test path (x → G_XY↓(x) → U(·)) and the training path
    (y → y↓ → G_Y↓X(y↓) → ẙ↓ → U(ẙ↓)), keyed like ``INTERMEDIATE_NAMES``.
    """
    x = check_image(x)
    y = check_image(y)
    param = next(bundle.sr.parameters())

    def tensor(img):
        return to_tensor(img, device=param.device, dtype=param.dtype)

    def raster(t):
        return to_array(t)[0].clip(0.0, 1.0)

    # training-path stages consume the 8-bit rasters that get saved
    y_down = quantize(predetermined_downscale(y, bundle.scale))
    x_corrected = bundle.g_correct(tensor(x))
    y_down_t = tensor(y_down)
    noise = draw_noise(y_down_t, torch.Generator().manual_seed(noise_seed))
    degraded = quantize(raster(bundle.g_degrade(y_down_t, noise)))
    pseudo = bundle.g_correct(tensor(degraded))

    return {
        "x": x,
        "x_corrected": raster(x_corrected),
        "x_sr": raster(bundle.sr(x_corrected)),
        "y": y,
        "y_down": y_down,
        "y_down_degraded": degraded,
        "y_down_pseudo_clean": raster(pseudo),
        "y_pseudo_sr": raster(bundle.sr(pseudo)),
    }


def dump_intermediates(bundle, x, y, out_dir, noise_seed=0):
    """Write the eight intermediate PNGs to ``out_dir``; returns their paths."""
    out_dir = Path(out_dir)
    rasters = intermediates(bundle, x, y, noise_seed)
    paths = [
        save_image(out_dir / filename, rasters[key])
        for key, filename in settings.INTERMEDIATE_NAMES.items()
    ]
    logger.info(f"Wrote {len(paths)} intermediate images to {out_dir}")
    return paths
