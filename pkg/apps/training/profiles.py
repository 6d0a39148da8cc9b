"""
Named experiment presets. A profile is a partial run config merged under
the config file and command-line flags; anything it leaves out keeps the
``TrainConfig`` default (the DIV2K realistic-wild recipe).
"""

import copy

from apps.core.exceptions import ConfigError

_DESK_NET = {"n_residual_groups": 1, "rcabs_per_group": 2, "base_channels": 16}
_DESK_ITERS = 2000

PROFILES = {
    "desk": {
        "scale": 2,
        "model": {
            "correction": _DESK_NET,
            "sr": _DESK_NET,
            "degradation": {"base_channels": 16},
            "discriminator": {"base_channels": 16},
        },
        "batch": 4,
        "lr_patch": 16,
        "total_iters": _DESK_ITERS,
        # the 100k/180k/240k/280k of a 300k run, rescaled
        "lr_milestones": [667, 1200, 1600, 1867],
        "checkpoint_every": 500,
        "validate_every": 500,
    },
    "div2k_wild": {
        "scale": 4,
        "weights": {"lambda_cyc": 1.0, "lambda_idt": 1.0, "lambda_geo": 1.0, "gamma": 0.1},
        "batch": 16,
        "lr_patch": 32,
        "total_iters": 300_000,
        "lr_milestones": [100_000, 180_000, 240_000, 280_000],
    },
    "face": {
        "scale": 2,
        "weights": {"lambda_idt": 2.0, "idt_mode": "source_lr"},
        "lr_prescale": 2,
    },
    "aerial": {
        "scale": 2,
        "weights": {"lambda_idt": 10.0, "lambda_geo": 100.0, "idt_mode": "source_lr"},
        "geo_ramp": {"enabled": True},
    },
    "aim_track2": {
        "scale": 4,
        "weights": {"lambda_idt": 5.0, "idt_mode": "source_lr"},
    },
}


def deep_merge(base, override):
    """Recursive dict merge; values in ``override`` win."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def profile_defaults(name):
    if not name:
        return {}
    try:
        return copy.deepcopy(PROFILES[name])
    except KeyError:
        raise ConfigError(
            f"Unknown profile '{name}'", available=sorted(PROFILES)
        ) from None
