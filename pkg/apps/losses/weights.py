import math
from dataclasses import asdict, dataclass
from enum import Enum

from apps.core.exceptions import ConfigError


class IdentityMode(str, Enum):
    CLEAN_LR = "clean_lr"  # ‖G(y↓) − y↓‖₁
    SOURCE_LR = "source_lr"  # ‖G(x) − x‖₁


class GanForm(str, Enum):
    NONSATURATING = "nonsaturating"
    MINIMAX = "minimax"
    LSGAN = "lsgan"


@dataclass(frozen=True)
class LossWeights:
    """Weights of the translation objective. ``gamma`` scales the HR adversarial term."""

    lambda_cyc: float = 1.0
    lambda_idt: float = 1.0
    lambda_geo: float = 1.0
    gamma: float = 0.1
    idt_mode: IdentityMode = IdentityMode.CLEAN_LR

    def __post_init__(self):
        for name in ("lambda_cyc", "lambda_idt", "lambda_geo", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {value}")
        object.__setattr__(self, "idt_mode", IdentityMode(self.idt_mode))

    def replace(self, **changes):
        return LossWeights(**{**asdict(self), **changes})

    def to_dict(self):
        data = asdict(self)
        data["idt_mode"] = self.idt_mode.value
        return data
