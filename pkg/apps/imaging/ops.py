"""Raster operations on float RGB images in [0, 1], laid out H×W×3.

Conventions fixed here so that oracles can reproduce every number:

- bicubic resampling uses the cubic convolution kernel with a = -0.5,
  sampling output pixel ``i`` at source coordinate ``(i + 0.5) * s - 0.5``
  with four taps and no extra anti-aliasing;
- Gaussian blur is truncated at ±4σ and renormalised to unit mass;
- both blur and resampling treat borders by half-sample symmetric
  reflection (``d c b a | a b c d``);
- every public operation clamps its result to [0, 1].
"""

import numpy as np
import torch
from scipy import ndimage

from apps.core.exceptions import DimensionError, ShapeError, UnsupportedScaleError

SUPPORTED_SCALES = (2, 4)
CUBIC_A = -0.5
GAUSSIAN_TRUNCATE = 4.0
DIHEDRAL_INDICES = tuple(range(1, 9))
IDENTITY = 1


def clamp(img):
    return np.clip(img, 0.0, 1.0)


def check_image(img):
    """Validate the H×W×3 layout and return the image as a float array."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"Expected an H×W×3 raster, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"Empty raster of shape {img.shape}")
    if not np.issubdtype(img.dtype, np.floating):
        img = img.astype(np.float64)
    return img


def check_scale(scale):
    if scale not in SUPPORTED_SCALES:
        raise UnsupportedScaleError(
            f"Scale {scale} is not supported; expected one of {SUPPORTED_SCALES}"
        )
    return scale


def cubic(x, a=CUBIC_A):
    """Cubic convolution kernel."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def reflect_index(idx, n):
    """Map indices outside [0, n) by half-sample symmetric reflection."""
    period = 2 * n
    m = np.mod(idx, period)
    return np.where(m < n, m, period - 1 - m)


def bicubic_matrix(n_in, n_out):
    """(n_out, n_in) matrix resampling one axis with the cubic kernel."""
    ratio = n_in / n_out
    centers = (np.arange(n_out) + 0.5) * ratio - 0.5
    taps = np.floor(centers).astype(np.int64)[:, None] - 1 + np.arange(4)[None, :]
    weights = cubic(centers[:, None] - taps)
    weights /= weights.sum(axis=1, keepdims=True)

    matrix = np.zeros((n_out, n_in))
    rows = np.repeat(np.arange(n_out), 4)
    np.add.at(matrix, (rows, reflect_index(taps, n_in).ravel()), weights.ravel())
    return matrix


def bicubic_resize(img, out_h, out_w):
    """Separable bicubic resampling to (out_h, out_w)."""
    img = check_image(img)
    h, w, c = img.shape
    rows = bicubic_matrix(h, out_h)
    cols = bicubic_matrix(w, out_w)
    out = (rows @ img.reshape(h, w * c)).reshape(out_h, w, c)
    out = np.einsum("jw,iwc->ijc", cols, out)
    return clamp(out).astype(img.dtype, copy=False)


def bicubic_upscale(img, factor):
    img = check_image(img)
    return bicubic_resize(img, img.shape[0] * factor, img.shape[1] * factor)


def gaussian_kernel(sigma, truncate=GAUSSIAN_TRUNCATE):
    """Sampled, unit-mass 2D Gaussian truncated at ±truncate·σ."""
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def gaussian_blur(img, sigma):
    img = check_image(img)
    if sigma <= 0:
        return img.copy()
    out = ndimage.gaussian_filter(
        img.astype(np.float64),
        sigma=(sigma, sigma, 0),
        mode="reflect",
        truncate=GAUSSIAN_TRUNCATE,
    )
    return out.astype(img.dtype, copy=False)


def predetermined_downscale(img, scale):
    """
    The fixed HR → clean LR operation: Gaussian blur with σ = scale / 2
    followed by bicubic downscaling by ``scale``.
    """
    check_scale(scale)
    img = check_image(img)
    h, w = img.shape[:2]
    if h % scale or w % scale:
        raise DimensionError(
            f"Image of size {h}×{w} is not divisible by scale {scale}",
            height=h,
            width=w,
            scale=scale,
        )
    blurred = gaussian_blur(img, scale / 2)
    return bicubic_resize(blurred, h // scale, w // scale)


def _decompose(index):
    """Split a dihedral index into (quarter turns, flip)."""
    if index not in DIHEDRAL_INDICES:
        raise ValueError(f"Dihedral index must be in 1..8, got {index}")
    return (index - 1) % 4, (index - 1) // 4


def _compose_index(turns, flip):
    return 1 + turns % 4 + 4 * flip


def inverse_dihedral(index):
    turns, flip = _decompose(index)
    if flip:
        return index
    return _compose_index(-turns, 0)


def compose_dihedral(first, second):
    """Index of T_first ∘ T_second (apply ``second``, then ``first``)."""
    k1, f1 = _decompose(first)
    k2, f2 = _decompose(second)
    turns = k1 - k2 if f1 else k1 + k2
    return _compose_index(turns, f1 ^ f2)


def dihedral(img, index):
    """
    Apply T_index to an H×W×C raster: an optional horizontal flip followed
    by ``turns`` counter-clockwise quarter rotations. Index 1 is the identity.
    """
    turns, flip = _decompose(index)
    out = np.asarray(img)
    if flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(np.rot90(out, turns, axes=(0, 1)))


def dihedral_tensor(tensor, index):
    """T_index on the spatial dims of an N×C×H×W tensor."""
    turns, flip = _decompose(index)
    if flip:
        tensor = torch.flip(tensor, dims=(3,))
    if turns:
        tensor = torch.rot90(tensor, turns, dims=(2, 3))
    return tensor


def to_uint8(img):
    """Round-to-nearest 8-bit quantisation."""
    return np.round(clamp(np.asarray(img, dtype=np.float64)) * 255.0).astype(np.uint8)


def quantize(img):
    return to_uint8(img).astype(np.float64) / 255.0
