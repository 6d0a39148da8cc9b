from rest_framework import serializers

from .config import SUPPORTED_SCALES, ModelConfig, NetworkConfig


class NetworkConfigSerializer(serializers.Serializer):
    """Fields left out keep the size of the network being configured."""

    n_residual_groups = serializers.IntegerField(min_value=1, required=False)
    rcabs_per_group = serializers.IntegerField(min_value=1, required=False)
    base_channels = serializers.IntegerField(min_value=1, required=False)
    reduction = serializers.IntegerField(min_value=1, required=False)
    residual_blocks = serializers.IntegerField(min_value=1, required=False)
    zero_tail = serializers.BooleanField(required=False)

    def create(self, validated_data):
        return NetworkConfig(**validated_data)


class ModelConfigSerializer(serializers.Serializer):
    """
    Network section of a run config. Sub-sections left out keep the
    default sizes; the scale is shared by every network.
    """

    scale = serializers.ChoiceField(choices=SUPPORTED_SCALES, required=False)
    correction = NetworkConfigSerializer(required=False)
    sr = NetworkConfigSerializer(required=False)
    degradation = NetworkConfigSerializer(required=False)
    discriminator = NetworkConfigSerializer(required=False)

    def create(self, validated_data):
        scale = validated_data.get("scale", ModelConfig.scale)
        defaults = ModelConfig(scale=scale)
        nets = {
            name: getattr(defaults, name).replace(**validated_data[name])
            for name in ("correction", "sr", "degradation", "discriminator")
            if name in validated_data
        }
        return ModelConfig(scale=scale, **nets)
