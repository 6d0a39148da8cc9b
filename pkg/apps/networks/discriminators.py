"""PatchGAN discriminators.

Five same-padded 3×3 convolutions, widths c → 2c → 4c → 8c → 1, LeakyReLU
after every layer but the last and no normalisation. The last layer emits
raw logits; the sigmoid lives inside the losses.
"""

from torch import nn

from apps.core.exceptions import UnsupportedScaleError

from .blocks import LEAKY_SLOPE, conv, init_weights, receptive_field
from .config import SUPPORTED_SCALES, NetworkConfig

KERNEL_SIZE = 3
N_LAYERS = 5


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg: NetworkConfig, strides=(1, 1, 1, 1, 1), in_channels=3):
        super().__init__()
        if len(strides) != N_LAYERS:
            raise ValueError(f"Expected {N_LAYERS} strides, got {strides}")
        c = cfg.base_channels
        widths = [in_channels, c, 2 * c, 4 * c, 8 * c, 1]
        layers = []
        for index, stride in enumerate(strides):
            layers.append(conv(widths[index], widths[index + 1], KERNEL_SIZE, stride))
            if index < N_LAYERS - 1:
                layers.append(nn.LeakyReLU(LEAKY_SLOPE, inplace=True))
        self.body = nn.Sequential(*layers)
        self.strides = tuple(strides)
        init_weights(self)

    def forward(self, x):
        return self.body(x)

    def receptive_field(self):
        """Side length, in input pixels, of the patch seen by one score."""
        return receptive_field([(KERNEL_SIZE, s) for s in self.strides])


def hr_strides(scale):
    """Stride 2 on the first layer for ×2, on the first two layers for ×4."""
    if scale not in SUPPORTED_SCALES:
        raise UnsupportedScaleError(
            f"Scale {scale} is not supported; expected one of {SUPPORTED_SCALES}"
        )
    n_strided = {2: 1, 4: 2}[scale]
    return tuple(2 if i < n_strided else 1 for i in range(N_LAYERS))


def build_lr_discriminator(cfg: NetworkConfig):
    return PatchDiscriminator(cfg)


def build_hr_discriminator(cfg: NetworkConfig, scale: int):
    return PatchDiscriminator(cfg, strides=hr_strides(scale))
