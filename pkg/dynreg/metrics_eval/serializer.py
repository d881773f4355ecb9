import json
from pathlib import Path

from rest_framework import serializers

from dynreg.exceptions import ConfigError
from humanoid_model.loaders import first_error
from humanoid_model.serializer import StrictSerializer, VersionedSerializer

from .models import MetricsReport, SequenceMetrics


class SequenceMetricsSerializer(StrictSerializer):
    clip = serializers.CharField()
    action = serializers.CharField(allow_blank=True, default="")
    success = serializers.ChoiceField(choices=[0, 1])
    root_error = serializers.FloatField(min_value=0.0)
    mpjpe = serializers.FloatField(min_value=0.0)
    accel_error = serializers.FloatField(min_value=0.0)
    foot_sliding = serializers.FloatField(min_value=0.0)
    penetration = serializers.FloatField(min_value=0.0)
    camera_error = serializers.FloatField(min_value=0.0)
    failsafe_resets = serializers.IntegerField(min_value=0)
    frames = serializers.IntegerField(min_value=0)
    fell = serializers.BooleanField()
    per_joint_mpjpe = serializers.DictField(child=serializers.FloatField(min_value=0.0), required=False, default=dict)


class MetricsReportSerializer(VersionedSerializer):
    seed = serializers.IntegerField(allow_null=True, required=False, default=None)
    config_hash = serializers.CharField(allow_blank=True, default="")
    sequences = SequenceMetricsSerializer(many=True)
    # derived on write, recomputed on read
    aggregate = serializers.DictField(required=False)
    success_by_action = serializers.DictField(required=False)


def write_report(path, report):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    return path


def read_report(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read report: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report is not valid JSON: {exc}", path=path) from exc
    serializer = MetricsReportSerializer(data=data)
    if not serializer.is_valid():
        key, message, _ = first_error(serializer.errors)
        raise ConfigError(f"{key}: {message}", path=path, key=key)
    data = serializer.validated_data
    return MetricsReport(
        sequences=[SequenceMetrics(**dict(s)) for s in data["sequences"]],
        seed=data["seed"],
        config_hash=data["config_hash"],
        format_version=data["format_version"],
    )
