"""Validation and resolution of run configs."""

import logging
from pathlib import Path

from rest_framework import serializers

from apps.core.exceptions import ConfigError
from apps.core.utils import read_json
from apps.losses.functional import RECONSTRUCTION_LOSSES
from apps.losses.serializers import LossWeightsSerializer
from apps.losses.weights import GanForm
from apps.networks.config import SUPPORTED_SCALES
from apps.networks.serializers import ModelConfigSerializer

from .config import GeoRamp, OptimSpec, TrainConfig, Variant
from .profiles import deep_merge, profile_defaults

logger = logging.getLogger(__name__)

PATH_KEYS = ("dataset", "output")


class OptimSpecSerializer(serializers.Serializer):
    lr = serializers.FloatField(min_value=0.0, required=False)
    beta1 = serializers.FloatField(min_value=0.0, max_value=0.999999, required=False)
    beta2 = serializers.FloatField(min_value=0.0, max_value=0.999999, required=False)
    epsilon = serializers.FloatField(min_value=0.0, required=False)

    def validate(self, data):
        for name in ("lr", "epsilon"):
            if name in data and data[name] <= 0:
                raise serializers.ValidationError({name: "Must be positive."})
        return data


class GeoRampSerializer(serializers.Serializer):
    enabled = serializers.BooleanField(default=False)
    fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.1)

    def create(self, validated_data):
        return GeoRamp(**validated_data)


class TrainConfigSerializer(serializers.Serializer):
    """
    Top-level run config. ``profile`` is resolved before validation (see
    :func:`resolve_train_config`); ``dataset`` and ``output`` are paths
    used by the ``train`` command, not part of ``TrainConfig``.
    """

    profile = serializers.CharField(required=False, allow_blank=True)
    dataset = serializers.CharField(required=False, allow_blank=True)
    output = serializers.CharField(required=False, allow_blank=True)

    weights = LossWeightsSerializer(required=False)
    optim_gan = OptimSpecSerializer(required=False)
    optim_sr = OptimSpecSerializer(required=False)
    model = ModelConfigSerializer(required=False)
    geo_ramp = GeoRampSerializer(required=False)

    total_iters = serializers.IntegerField(min_value=1, default=TrainConfig.total_iters)
    lr_milestones = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        allow_empty=True,
        default=list(TrainConfig.lr_milestones),
    )
    batch = serializers.IntegerField(min_value=1, default=TrainConfig.batch)
    lr_patch = serializers.IntegerField(min_value=1, default=TrainConfig.lr_patch)
    scale = serializers.ChoiceField(choices=SUPPORTED_SCALES, default=TrainConfig.scale)
    seed = serializers.IntegerField(min_value=0, default=0)
    variant = serializers.ChoiceField(
        choices=[v.value for v in Variant], default=Variant.FULL.value
    )
    gan_form = serializers.ChoiceField(
        choices=[f.value for f in GanForm], default=GanForm.NONSATURATING.value
    )
    reconstruction = serializers.CharField(default="l1")
    checkpoint_every = serializers.IntegerField(min_value=1, default=TrainConfig.checkpoint_every)
    validate_every = serializers.IntegerField(min_value=0, default=0)
    workers = serializers.IntegerField(min_value=0, default=0)
    lr_prescale = serializers.IntegerField(min_value=1, default=1)
    device = serializers.CharField(required=False, allow_blank=True, default="")

    def validate_lr_milestones(self, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("Milestones must be strictly increasing.")
        return value

    def validate_reconstruction(self, value):
        if value not in RECONSTRUCTION_LOSSES:
            raise serializers.ValidationError(
                f"Unknown reconstruction loss; choose from {sorted(RECONSTRUCTION_LOSSES)}."
            )
        return value

    def validate(self, data):
        model_scale = data.get("model", {}).get("scale")
        if model_scale is not None and model_scale != data["scale"]:
            raise serializers.ValidationError(
                {"model": f"model.scale {model_scale} differs from scale {data['scale']}."}
            )
        return data

    def create(self, validated_data):
        data = dict(validated_data)
        for key in ("profile",) + PATH_KEYS:
            data.pop(key, None)

        model = dict(data.pop("model", {}))
        model["scale"] = data["scale"]
        data["model"] = ModelConfigSerializer().create(model)
        data["weights"] = LossWeightsSerializer().create(data.pop("weights", {}))
        data["optim_gan"] = OptimSpec(**data.pop("optim_gan", {}))
        data["optim_sr"] = OptimSpec(**{"beta1": 0.9, **data.pop("optim_sr", {})})
        data["geo_ramp"] = GeoRamp(**data.pop("geo_ramp", {}))
        return TrainConfig(**data)


def load_train_config(data):
    """Validate a merged config dict into a TrainConfig."""
    serializer = TrainConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError("Invalid training config", errors=serializer.errors)
    return serializer.save()


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}", path=str(path))
    try:
        return read_json(path)
    except ValueError as exc:
        raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc


def resolve_train_config(config_path=None, profile=None, overrides=None):
    """
    Merge profile defaults < config file < overrides and validate.

    Returns ``(TrainConfig, paths)`` where ``paths`` holds the ``dataset``
    and ``output`` entries of the merged config.
    """
    file_data = read_config_file(config_path) if config_path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    profile = profile or overrides.get("profile") or file_data.get("profile")

    merged = deep_merge(deep_merge(profile_defaults(profile), file_data), overrides)
    if profile:
        merged["profile"] = profile
    logger.debug(f"Resolved config (profile={profile or 'none'}): {merged}")
    cfg = load_train_config(merged)
    return cfg, {key: merged.get(key) or None for key in PATH_KEYS}
