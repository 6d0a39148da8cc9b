"""Test-time inference: U ∘ G_XY↓ on single rasters."""

import numpy as np
import torch

from apps.imaging.ops import (
    DIHEDRAL_INDICES,
    check_image,
    clamp,
    dihedral,
    inverse_dihedral,
)
from apps.imaging.sampling import to_array, to_tensor


def _placement(module):
    param = next(module.parameters())
    return param.device, param.dtype


@torch.no_grad()
def infer(bundle, x, skip_correction=False):
    """
    Upscale one H×W×3 raster to (H·scale)×(W·scale)×3 in [0, 1].

    Runs U(G_XY↓(x)); with ``skip_correction`` (models trained on
    degraded pseudo inputs) U alone. Neither G_Y↓X nor any
    discriminator is used.
    """
    img = check_image(x)
    device, dtype = _placement(bundle.sr)
    tensor = to_tensor(img, device=device, dtype=dtype)
    lr = tensor if skip_correction else bundle.g_correct(tensor)
    return clamp(to_array(bundle.sr(lr))[0])


def self_ensemble_infer(bundle, x, skip_correction=False):
    """
    Mean of T⁻¹(infer(T(x))) over the eight flips and rotations. Non-square
    inputs rotate with swapped dims; the networks accept any size.
    """
    img = check_image(x)
    outputs = [
        dihedral(infer(bundle, dihedral(img, i), skip_correction), inverse_dihedral(i))
        for i in DIHEDRAL_INDICES
    ]
    return np.mean(outputs, axis=0)
