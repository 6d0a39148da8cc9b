from rest_framework import serializers

from .weights import IdentityMode, LossWeights


class LossWeightsSerializer(serializers.Serializer):
    lambda_cyc = serializers.FloatField(min_value=0.0, default=1.0)
    lambda_idt = serializers.FloatField(min_value=0.0, default=1.0)
    lambda_geo = serializers.FloatField(min_value=0.0, default=1.0)
    gamma = serializers.FloatField(min_value=0.0, default=0.1)
    idt_mode = serializers.ChoiceField(
        choices=[mode.value for mode in IdentityMode], default=IdentityMode.CLEAN_LR.value
    )

    def create(self, validated_data):
        return LossWeights(**validated_data)
