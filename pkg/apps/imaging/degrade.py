"""Synthetic degradations for building desk-scale unpaired datasets.

A degradation is blur, then sub-pixel shift, then additive Gaussian noise,
then clamping. Parameters are fixed per LR image and drawn anew for each
image by :func:`random_degradation`.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from apps.core.exceptions import ConfigError

from .ops import check_image, clamp, gaussian_kernel

BLUR_KINDS = ("identity", "gaussian", "motion")


@dataclass(frozen=True)
class BlurSpec:
    kind: str = "identity"
    sigma: float = 0.0
    length: int = 0
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in BLUR_KINDS:
            raise ConfigError(f"Unknown blur kind '{self.kind}'")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ConfigError("Gaussian blur needs sigma > 0")
        if self.kind == "motion" and self.length < 1:
            raise ConfigError("Motion blur needs length >= 1")


@dataclass(frozen=True)
class DegradationSpec:
    blur: BlurSpec = field(default_factory=BlurSpec)
    noise_sigma: float = 0.0
    shift: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if len(self.shift) != 2:
            raise ConfigError("shift must be a (dy, dx) pair")

    def to_dict(self):
        data = asdict(self)
        data["shift"] = list(self.shift)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        blur = BlurSpec(**dict(data.pop("blur", None) or {}))
        shift = tuple(data.pop("shift", (0.0, 0.0)))
        return cls(blur=blur, shift=shift, **data)


@dataclass(frozen=True)
class DegradationRanges:
    """Ranges from which per-image degradations are drawn."""

    noise_sigma: tuple = (0.0, 0.0)
    blur_sigma: tuple = (0.0, 0.0)
    motion_prob: float = 0.0
    motion_length: tuple = (3, 9)
    shift_max: float = 0.0


def motion_kernel(length, angle):
    """Normalised line kernel of ``length`` pixels rotated by ``angle`` degrees."""
    size = length if length % 2 else length + 1
    kernel = np.zeros((size, size))
    kernel[size // 2, (size - length) // 2 : (size - length) // 2 + length] = 1.0
    if angle % 180:
        kernel = ndimage.rotate(kernel, angle, reshape=False, order=1)
        kernel = np.clip(kernel, 0.0, None)
    return kernel / kernel.sum()


def blur_kernel(spec):
    if spec.kind == "gaussian":
        return gaussian_kernel(spec.sigma)
    if spec.kind == "motion":
        return motion_kernel(spec.length, spec.angle)
    return np.ones((1, 1))


def synth_degrade(img, spec):
    """Blur, shift, add noise, clamp. Deterministic given ``spec.seed``."""
    img = check_image(img)
    out = img.astype(np.float64)

    kernel = blur_kernel(spec.blur)
    if kernel.shape != (1, 1):
        out = ndimage.convolve(out, kernel[:, :, None], mode="reflect")

    dy, dx = spec.shift
    if dy or dx:
        out = ndimage.shift(out, (dy, dx, 0.0), order=1, mode="reflect")

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        out = out + rng.normal(0.0, spec.noise_sigma, size=out.shape)

    return clamp(out).astype(img.dtype, copy=False)


def _uniform(rng, bounds):
    low, high = bounds
    return float(low) if high <= low else float(rng.uniform(low, high))


def random_degradation(rng, ranges):
    """Draw one DegradationSpec; all its parameters are constant over an image."""
    if rng.random() < ranges.motion_prob:
        low, high = ranges.motion_length
        blur = BlurSpec(
            kind="motion",
            length=int(rng.integers(low, high + 1)),
            angle=float(rng.uniform(0.0, 180.0)),
        )
    else:
        sigma = _uniform(rng, ranges.blur_sigma)
        blur = BlurSpec(kind="gaussian", sigma=sigma) if sigma > 0 else BlurSpec()

    if ranges.shift_max > 0:
        shift = tuple(float(v) for v in rng.uniform(-ranges.shift_max, ranges.shift_max, 2))
    else:
        shift = (0.0, 0.0)

    return DegradationSpec(
        blur=blur,
        noise_sigma=_uniform(rng, ranges.noise_sigma),
        shift=shift,
        seed=int(rng.integers(0, 2**31 - 1)),
    )
