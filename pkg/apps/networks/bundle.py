from dataclasses import dataclass, fields

from torch import nn

from apps.core.utils import parameter_digest

from .config import ModelConfig
from .discriminators import build_hr_discriminator, build_lr_discriminator
from .generators import (
    build_correction_generator,
    build_degradation_generator,
    build_sr_network,
)


@dataclass
class NetworkBundle:
    """
    The six networks of the pipeline:

    - ``g_correct``  G_XY↓, degraded LR → clean LR
    - ``g_degrade``  G_Y↓X, clean LR (+ noise) → degraded LR
    - ``sr``         U_Y↓Y, clean LR → HR
    - ``d_lr_x``     D_X, judges degraded LR rasters
    - ``d_lr_yd``    D_Y↓, judges clean LR rasters
    - ``d_hr``       D_X↑, judges U outputs
    """

    g_correct: nn.Module
    g_degrade: nn.Module
    sr: nn.Module
    d_lr_x: nn.Module
    d_lr_yd: nn.Module
    d_hr: nn.Module
    scale: int
    config: ModelConfig = None

    GENERATORS = ("g_correct", "g_degrade")
    DISCRIMINATORS = ("d_lr_x", "d_lr_yd", "d_hr")

    def named_networks(self):
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in ("scale", "config")
        }

    def generators(self):
        return [getattr(self, name) for name in self.GENERATORS]

    def discriminators(self):
        return [getattr(self, name) for name in self.DISCRIMINATORS]

    def to(self, *args, **kwargs):
        for net in self.named_networks().values():
            net.to(*args, **kwargs)
        return self

    def train(self, mode=True):
        for net in self.named_networks().values():
            net.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def parameter_digest(self):
        """Per-network SHA-256 of the parameters."""
        return {name: parameter_digest(net) for name, net in self.named_networks().items()}

    def state_dict(self):
        return {
            f"{name}/{key}": tensor
            for name, net in self.named_networks().items()
            for key, tensor in net.state_dict().items()
        }

    def load_state_dict(self, state):
        for name, net in self.named_networks().items():
            prefix = f"{name}/"
            net.load_state_dict(
                {k[len(prefix) :]: v for k, v in state.items() if k.startswith(prefix)}
            )
        return self


def build_bundle(cfg: ModelConfig):
    return NetworkBundle(
        g_correct=build_correction_generator(cfg.correction),
        g_degrade=build_degradation_generator(cfg.degradation),
        sr=build_sr_network(cfg.sr),
        d_lr_x=build_lr_discriminator(cfg.discriminator),
        d_lr_yd=build_lr_discriminator(cfg.discriminator),
        d_hr=build_hr_discriminator(cfg.discriminator, cfg.scale),
        scale=cfg.scale,
        config=cfg,
    )
