"""Validation of degradation settings read from config files and flags."""

from rest_framework import serializers

from .degrade import BLUR_KINDS, BlurSpec, DegradationRanges, DegradationSpec


def _pair(child, **kwargs):
    return serializers.ListField(child=child, min_length=2, max_length=2, **kwargs)


class BlurSpecSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=BLUR_KINDS, default="identity")
    sigma = serializers.FloatField(min_value=0.0, default=0.0)
    length = serializers.IntegerField(min_value=0, default=0)
    angle = serializers.FloatField(default=0.0)

    def validate(self, data):
        if data["kind"] == "gaussian" and data["sigma"] <= 0:
            raise serializers.ValidationError("Gaussian blur needs sigma > 0.")
        if data["kind"] == "motion" and data["length"] < 1:
            raise serializers.ValidationError("Motion blur needs length >= 1.")
        return data

    def create(self, validated_data):
        return BlurSpec(**validated_data)


class DegradationSpecSerializer(serializers.Serializer):
    blur = BlurSpecSerializer(required=False)
    noise_sigma = serializers.FloatField(min_value=0.0, default=0.0)
    shift = _pair(serializers.FloatField(), default=[0.0, 0.0])
    seed = serializers.IntegerField(min_value=0, default=0)

    def create(self, validated_data):
        return DegradationSpec.from_dict(validated_data)


class DegradationRangesSerializer(serializers.Serializer):
    """
    Ranges for per-image degradations in ``make_dataset``.
    Each range is a ``[low, high]`` pair; equal bounds fix the value.
    """

    noise_sigma = _pair(serializers.FloatField(min_value=0.0), default=[0.0, 0.0])
    blur_sigma = _pair(serializers.FloatField(min_value=0.0), default=[0.0, 0.0])
    motion_prob = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    motion_length = _pair(serializers.IntegerField(min_value=1), default=[3, 9])
    shift_max = serializers.FloatField(min_value=0.0, default=0.0)

    def validate(self, data):
        for name in ("noise_sigma", "blur_sigma", "motion_length"):
            low, high = data[name]
            if low > high:
                raise serializers.ValidationError({name: "Lower bound exceeds upper bound."})
        return data

    def create(self, validated_data):
        return DegradationRanges(
            **{key: tuple(value) if isinstance(value, list) else value
               for key, value in validated_data.items()}
        )
