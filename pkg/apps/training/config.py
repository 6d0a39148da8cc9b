from dataclasses import asdict, dataclass, field, replace
from enum import Enum

from apps.core.exceptions import ConfigError
from apps.losses.weights import GanForm, LossWeights
from apps.networks.config import ModelConfig

from .schedules import geo_weight


class Variant(str, Enum):
    FULL = "full"
    NO_D_HR = "no_d_hr"  # γ = 0, D_X↑ never trained
    TRAIN_ON_CLEAN = "train_on_clean"  # U learns from (y↓, y)
    TRAIN_ON_DEGRADED = "train_on_degraded"  # U learns from (G_Y↓X(y↓), y), tested alone


@dataclass(frozen=True)
class OptimSpec:
    """Adam hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0 or self.lr <= 0:
            raise ConfigError("Adam epsilon and lr must be positive")


def _sr_optim():
    return OptimSpec(beta1=0.9)


@dataclass(frozen=True)
class GeoRamp:
    """Linear ramp of λ_geo from 0 over the first ``fraction`` of the run."""

    enabled: bool = False
    fraction: float = 0.1

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"geo_ramp.fraction must lie in (0, 1], got {self.fraction}")

    def end_iter(self, total_iters):
        return max(1, round(self.fraction * total_iters))


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    optim_gan: OptimSpec = field(default_factory=OptimSpec)
    optim_sr: OptimSpec = field(default_factory=_sr_optim)
    model: ModelConfig = field(default_factory=ModelConfig)
    total_iters: int = 300_000
    lr_milestones: tuple = (100_000, 180_000, 240_000, 280_000)
    batch: int = 16
    lr_patch: int = 32
    scale: int = 4
    seed: int = 0
    variant: Variant = Variant.FULL
    geo_ramp: GeoRamp = field(default_factory=GeoRamp)
    gan_form: GanForm = GanForm.NONSATURATING
    reconstruction: str = "l1"
    checkpoint_every: int = 10_000
    validate_every: int = 0
    workers: int = 0
    lr_prescale: int = 1
    device: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "gan_form", GanForm(self.gan_form))
        object.__setattr__(self, "lr_milestones", tuple(self.lr_milestones))
        if any(b <= a for a, b in zip(self.lr_milestones, self.lr_milestones[1:])):
            raise ConfigError(f"lr_milestones must be strictly increasing: {self.lr_milestones}")
        for name in ("total_iters", "batch", "lr_patch", "lr_prescale"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.model.scale != self.scale:
            object.__setattr__(self, "model", replace(self.model, scale=self.scale))

    def weights_at(self, iteration):
        """Loss weights in effect at ``iteration`` (variant and λ_geo ramp applied)."""
        weights = self.weights.replace(lambda_geo=geo_weight(iteration, self))
        if self.variant is Variant.NO_D_HR:
            weights = weights.replace(gamma=0.0)
        return weights

    def to_dict(self):
        data = asdict(self)
        data["weights"] = self.weights.to_dict()
        data["variant"] = self.variant.value
        data["gan_form"] = self.gan_form.value
        data["lr_milestones"] = list(self.lr_milestones)
        data["model"] = self.model.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        parts = {}
        if "weights" in data:
            parts["weights"] = LossWeights(**data.pop("weights"))
        for name in ("optim_gan", "optim_sr"):
            if name in data:
                parts[name] = OptimSpec(**data.pop(name))
        if "geo_ramp" in data:
            parts["geo_ramp"] = GeoRamp(**data.pop("geo_ramp"))
        if "model" in data:
            parts["model"] = ModelConfig.from_dict(data.pop("model"))
        return cls(**data, **parts)
