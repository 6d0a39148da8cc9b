"""Generators: LR correction, LR degradation and the SR network."""

import torch
from torch import nn

from apps.core.exceptions import ShapeError

from .blocks import (
    ResidualBlock,
    ResidualInResidual,
    Upsampler,
    conv,
    conv_bn_act,
    init_weights,
    zero_module,
)
from .config import NetworkConfig

COLORS = 3


class CorrectionGenerator(nn.Module):
    """
    G_XY↓: reduced RCAN without the upscaling layer, mapping a degraded LR
    raster to the clean LR domain at the same size.

    head conv → residual groups of RCABs (long skip) → tail conv, added to
    the input raster. With ``zero_tail`` the network starts as the identity.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        channels = cfg.base_channels
        self.head = conv(COLORS, channels, 3)
        self.body = ResidualInResidual(
            channels, cfg.n_residual_groups, cfg.rcabs_per_group, cfg.reduction
        )
        self.tail = conv(channels, COLORS, 3)
        init_weights(self)
        if cfg.zero_tail:
            zero_module(self.tail)

    def forward(self, x):
        return x + self.tail(self.body(self.head(x)))


class SRNetwork(nn.Module):
    """U_Y↓Y: reduced RCAN with a sub-pixel upscaling tail."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        channels = cfg.base_channels
        self.scale = cfg.scale
        self.head = conv(COLORS, channels, 3)
        self.body = ResidualInResidual(
            channels, cfg.n_residual_groups, cfg.rcabs_per_group, cfg.reduction
        )
        self.upsample = Upsampler(cfg.scale, channels)
        self.tail = conv(channels, COLORS, 3)
        init_weights(self)
        if cfg.zero_tail:
            zero_module(self.tail)

    def forward(self, x):
        return self.tail(self.upsample(self.body(self.head(x))))


class DegradationGenerator(nn.Module):
    """
    G_Y↓X: stochastic map from clean LR to the degraded LR domain.

    One head per input (RGB raster, single-channel N(0, 1) noise raster),
    each a 5×5 conv–BN–LeakyReLU followed by one residual block. The
    concatenated features go through a 1×1 fusion layer, six residual
    blocks and two more 1×1 fusion layers, the last of which projects to
    RGB and is added to the input raster.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        channels = cfg.base_channels
        self.image_head = nn.Sequential(
            conv_bn_act(COLORS, channels, 5), ResidualBlock(channels)
        )
        self.noise_head = nn.Sequential(conv_bn_act(1, channels, 5), ResidualBlock(channels))
        self.body = nn.Sequential(
            conv_bn_act(2 * channels, channels, 1),
            *[ResidualBlock(channels) for _ in range(cfg.residual_blocks)],
            conv_bn_act(channels, channels, 1),
        )
        self.tail = conv(channels, COLORS, 1)
        init_weights(self)
        if cfg.zero_tail:
            zero_module(self.tail)

    def forward(self, x, noise):
        if noise.dim() != 4 or noise.shape[1] != 1:
            raise ShapeError(f"Noise must be N×1×H×W, got {tuple(noise.shape)}")
        if noise.shape[0] != x.shape[0] or noise.shape[2:] != x.shape[2:]:
            raise ShapeError(
                f"Noise shape {tuple(noise.shape)} does not match image {tuple(x.shape)}"
            )
        features = torch.cat([self.image_head(x), self.noise_head(noise)], dim=1)
        return x + self.tail(self.body(features))


def draw_noise(like, generator=None):
    """N×1×H×W standard normal noise matching the batch and size of ``like``."""
    n, _, h, w = like.shape
    noise = torch.randn((n, 1, h, w), generator=generator, dtype=like.dtype)
    return noise.to(like.device)


def build_correction_generator(cfg: NetworkConfig):
    return CorrectionGenerator(cfg)


def build_sr_network(cfg: NetworkConfig):
    return SRNetwork(cfg)


def build_degradation_generator(cfg: NetworkConfig):
    return DegradationGenerator(cfg)
