"""Building blocks shared by the generators and the SR network."""

import math

import torch
from torch import nn

LEAKY_SLOPE = 0.2


def conv(in_channels, out_channels, kernel_size, stride=1, bias=True):
    """Same-padded convolution."""
    return nn.Conv2d(
        in_channels,
        out_channels,
        kernel_size,
        stride=stride,
        padding=kernel_size // 2,
        bias=bias,
    )


def init_weights(module):
    """
    Fan-in scaled normal init for convolutions, zero biases,
    BN with γ = 1 and β = 0.
    """
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels // m.groups * m.kernel_size[0] * m.kernel_size[1]
            nn.init.normal_(m.weight, mean=0.0, std=1.0 / math.sqrt(fan_in))
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return module


## Channel Attention (CA) Layer
class ChannelAttention(nn.Module):
    def __init__(self, channels, reduction=16):
        super().__init__()
        squeezed = max(1, channels // reduction)
        self.body = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, squeezed, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(squeezed, channels, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return x * self.body(x)


## Residual Channel Attention Block (RCAB)
class RCAB(nn.Module):
    def __init__(self, channels, reduction=16, kernel_size=3):
        super().__init__()
        self.body = nn.Sequential(
            conv(channels, channels, kernel_size),
            nn.ReLU(inplace=True),
            conv(channels, channels, kernel_size),
            ChannelAttention(channels, reduction),
        )

    def forward(self, x):
        return x + self.body(x)


## Residual Group (RG)
class ResidualGroup(nn.Module):
    def __init__(self, channels, n_rcabs, reduction=16, kernel_size=3):
        super().__init__()
        layers = [RCAB(channels, reduction, kernel_size) for _ in range(n_rcabs)]
        layers.append(conv(channels, channels, kernel_size))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.body(x)


class ResidualInResidual(nn.Module):
    """Residual groups followed by a conv, wrapped in the long skip."""

    def __init__(self, channels, n_groups, n_rcabs, reduction=16):
        super().__init__()
        layers = [ResidualGroup(channels, n_rcabs, reduction) for _ in range(n_groups)]
        layers.append(conv(channels, channels, 3))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.body(x)


class Upsampler(nn.Sequential):
    """Sub-pixel upscaling: one conv + PixelShuffle(2) per factor of two."""

    def __init__(self, scale, channels):
        stages = int(math.log2(scale))
        if 2**stages != scale:
            raise ValueError(f"Upsampler needs a power-of-two scale, got {scale}")
        layers = []
        for _ in range(stages):
            layers.append(conv(channels, 4 * channels, 3))
            layers.append(nn.PixelShuffle(2))
        super().__init__(*layers)


def conv_bn_act(in_channels, out_channels, kernel_size):
    return nn.Sequential(
        conv(in_channels, out_channels, kernel_size),
        nn.BatchNorm2d(out_channels),
        nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
    )


class ResidualBlock(nn.Module):
    """Two 5×5 conv–BN–LeakyReLU layers with an identity skip."""

    def __init__(self, channels, kernel_size=5):
        super().__init__()
        self.body = nn.Sequential(
            conv_bn_act(channels, channels, kernel_size),
            conv_bn_act(channels, channels, kernel_size),
        )

    def forward(self, x):
        return x + self.body(x)


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


def receptive_field(layers):
    """Receptive field of a stack of (kernel_size, stride) layers."""
    field, jump = 1, 1
    for kernel_size, stride in layers:
        field += (kernel_size - 1) * jump
        jump *= stride
    return field


def frozen(module):
    """Detached parameters of ``module``, keyed by name."""
    return {name: p.detach() for name, p in module.named_parameters()}


def set_requires_grad(modules, flag):
    for module in modules:
        for p in module.parameters():
            p.requires_grad_(flag)


@torch.no_grad()
def zero_module(module):
    for p in module.parameters():
        p.zero_()
    return module
