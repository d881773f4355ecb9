from rest_framework import serializers

from humanoid_model.serializer import StrictSerializer, VersionedSerializer


class NetworkHeaderSerializer(StrictSerializer):
    shapes = serializers.DictField(child=serializers.ListField(child=serializers.IntegerField(min_value=0)))
    log_std = serializers.ListField(child=serializers.FloatField(), required=False, default=list)
    size = serializers.IntegerField(min_value=0)

    def validate(self, data):
        implied = 0
        for shape in data["shapes"].values():
            count = 1
            for n in shape:
                count *= n
            implied += count
        if implied != data["size"]:
            raise serializers.ValidationError(f"shapes imply {implied} parameters, header says {data['size']}")
        return data


class OptimizerHeaderSerializer(StrictSerializer):
    t = serializers.IntegerField(min_value=0)
    lr = serializers.FloatField(min_value=0.0)


class CheckpointHeaderSerializer(VersionedSerializer):
    kind = serializers.CharField()
    networks = serializers.DictField(child=NetworkHeaderSerializer())
    optimizers = serializers.DictField(child=OptimizerHeaderSerializer(), required=False, default=dict)
    rng_state = serializers.DictField(required=False, allow_null=True, default=None)
    config_hash = serializers.CharField(allow_blank=True, default="")
    extra = serializers.DictField(required=False, default=dict)
