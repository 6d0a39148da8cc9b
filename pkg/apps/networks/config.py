from dataclasses import asdict, dataclass, field

from apps.core.exceptions import ConfigError, UnsupportedScaleError

SUPPORTED_SCALES = (2, 4)


@dataclass(frozen=True)
class NetworkConfig:
    """
    Size of one network. RCAN-style networks use the group/RCAB counts,
    the degradation generator uses ``residual_blocks``, discriminators use
    ``base_channels`` as the width of their first layer.
    """

    n_residual_groups: int = 5
    rcabs_per_group: int = 10
    base_channels: int = 64
    scale: int = 4
    reduction: int = 16
    residual_blocks: int = 6
    zero_tail: bool = False

    def __post_init__(self):
        for name in (
            "n_residual_groups",
            "rcabs_per_group",
            "base_channels",
            "reduction",
            "residual_blocks",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.scale not in SUPPORTED_SCALES:
            raise UnsupportedScaleError(
                f"Scale {self.scale} is not supported; expected one of {SUPPORTED_SCALES}"
            )

    def replace(self, **changes):
        return NetworkConfig(**{**asdict(self), **changes})


def _correction_default():
    return NetworkConfig(n_residual_groups=5, rcabs_per_group=10)


def _sr_default():
    return NetworkConfig(n_residual_groups=5, rcabs_per_group=20)


@dataclass(frozen=True)
class ModelConfig:
    """Configs for the networks of a bundle, sharing one scale factor."""

    scale: int = 4
    correction: NetworkConfig = field(default_factory=_correction_default)
    sr: NetworkConfig = field(default_factory=_sr_default)
    degradation: NetworkConfig = field(default_factory=NetworkConfig)
    discriminator: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if self.scale not in SUPPORTED_SCALES:
            raise UnsupportedScaleError(
                f"Scale {self.scale} is not supported; expected one of {SUPPORTED_SCALES}"
            )
        for name in ("correction", "sr", "degradation", "discriminator"):
            cfg = getattr(self, name)
            if cfg.scale != self.scale:
                object.__setattr__(self, name, cfg.replace(scale=self.scale))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        nets = {
            name: NetworkConfig(**data.pop(name))
            for name in ("correction", "sr", "degradation", "discriminator")
            if name in data
        }
        return cls(**data, **nets)

    @classmethod
    def tiny(cls, scale=2, channels=16, groups=1, rcabs=2, blocks=6):
        """Desk-scale networks small enough for CPU runs."""
        net = NetworkConfig(
            n_residual_groups=groups,
            rcabs_per_group=rcabs,
            base_channels=channels,
            scale=scale,
            residual_blocks=blocks,
        )
        return cls(scale=scale, correction=net, sr=net, degradation=net, discriminator=net)
