from django.conf import settings
from packaging.version import InvalidVersion, Version
from rest_framework import serializers


def triplet(**kwargs):
    return serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3, **kwargs)


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown field."] for key in unknown})
        return super().to_internal_value(data)


class VersionedSerializer(StrictSerializer):
    format_version = serializers.CharField()

    def validate_format_version(self, value):
        try:
            version = Version(value)
        except InvalidVersion:
            raise serializers.ValidationError(f"{value!r} is not a valid version string")
        supported = Version(settings.FORMAT_VERSION)
        if version.major != supported.major or version > supported:
            raise serializers.ValidationError(
                f"format_version {value} is not readable by this build (supports {supported})",
                code="version",
            )
        return value


class BodySerializer(StrictSerializer):
    name = serializers.CharField()
    parent = serializers.IntegerField(min_value=-1)
    joint = serializers.ChoiceField(choices=["free", "ball", "fixed"], default="ball")
    offset = triplet()
    radius = serializers.FloatField()
    half_length = serializers.FloatField()
    density = serializers.FloatField()
    kp = triplet(required=False, default=list)
    kd = triplet(required=False, default=list)
    joint_limits = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        required=False,
        default=list,
    )
    capsule_center = triplet(required=False, default=lambda: [0.0, 0.0, 0.0])
    capsule_axis = triplet(required=False, default=lambda: [0.0, 0.0, 1.0])

    def validate_radius(self, value):
        if value <= 0:
            raise serializers.ValidationError("radius must be positive")
        return value

    def validate_half_length(self, value):
        if value < 0:
            raise serializers.ValidationError("half_length must be non-negative")
        return value

    def validate_density(self, value):
        if value <= 0:
            raise serializers.ValidationError("density must be positive")
        return value

    def validate_capsule_axis(self, value):
        if sum(v * v for v in value) < 1e-12:
            raise serializers.ValidationError("capsule_axis must be non-zero")
        return value

    def validate(self, data):
        if data["joint"] == "ball":
            if len(data["kp"]) != 3 or len(data["kd"]) != 3:
                raise serializers.ValidationError("ball joints need three kp and three kd gains")
            if min(data["kp"]) <= 0:
                raise serializers.ValidationError({"kp": ["kp must be positive"]})
            if min(data["kd"]) < 0:
                raise serializers.ValidationError({"kd": ["kd must be non-negative"]})
            if data["joint_limits"] and len(data["joint_limits"]) != 3:
                raise serializers.ValidationError({"joint_limits": ["expected three [lower, upper] pairs"]})
        elif data["kp"] or data["kd"] or data["joint_limits"]:
            raise serializers.ValidationError(f"{data['joint']} joints take no gains or limits")
        for lower, upper in data["joint_limits"]:
            if lower >= upper:
                raise serializers.ValidationError({"joint_limits": ["lower bound must be below upper bound"]})
        return data


class HumanoidModelSerializer(VersionedSerializer):
    name = serializers.CharField()
    roles = serializers.DictField(required=False, default=dict)
    bodies = serializers.ListField(child=BodySerializer(), min_length=1)
    collision_pairs = serializers.ListField(
        child=serializers.ListField(child=serializers.CharField(), min_length=2, max_length=2),
        required=False,
        default=list,
    )

    def validate_bodies(self, bodies):
        names = [b["name"] for b in bodies]
        if len(set(names)) != len(names):
            raise serializers.ValidationError("body names must be unique")
        roots = [i for i, b in enumerate(bodies) if b["parent"] == -1]
        if roots != [0]:
            raise serializers.ValidationError(
                f"exactly one root is required and it must come first, found roots at {roots}",
                code="topology",
            )
        if bodies[0]["joint"] != "free":
            raise serializers.ValidationError("the root body must use a free joint")
        for index, body in enumerate(bodies[1:], start=1):
            if body["parent"] >= index:
                raise serializers.ValidationError(
                    f"body {body['name']!r} (index {index}) has parent index {body['parent']}: "
                    "bodies must be in topological order (parent index < own index)",
                    code="topology",
                )
            if body["joint"] == "free":
                raise serializers.ValidationError(f"body {body['name']!r}: only the root may be free")
        return bodies

    def validate(self, data):
        names = {b["name"] for b in data["bodies"]}
        for role, value in data["roles"].items():
            for name in value if isinstance(value, list) else [value]:
                if name not in names:
                    raise serializers.ValidationError({"roles": [f"role {role!r} names unknown body {name!r}"]})
        for pair in data["collision_pairs"]:
            for name in pair:
                if name not in names:
                    raise serializers.ValidationError({"collision_pairs": [f"unknown body {name!r}"]})
        return data


class SceneObjectSerializer(StrictSerializer):
    name = serializers.CharField()
    obj_class = serializers.ChoiceField(choices=["chair", "box", "obstacle", "none"])
    shape = serializers.ChoiceField(choices=["box", "capsule"])
    position = triplet()
    rotation = serializers.ListField(
        child=serializers.FloatField(), min_length=4, max_length=4, required=False, default=lambda: [1.0, 0.0, 0.0, 0.0]
    )
    mobility = serializers.ChoiceField(choices=["static", "free"], default="static")
    mass = serializers.FloatField(required=False, default=0.0)
    half_extents = serializers.ListField(child=serializers.FloatField(), required=False, default=list)
    radius = serializers.FloatField(required=False, default=0.0)
    half_length = serializers.FloatField(required=False, default=0.0)

    def validate_rotation(self, value):
        if sum(v * v for v in value) < 1e-12:
            raise serializers.ValidationError("rotation quaternion must be non-zero")
        return value

    def validate(self, data):
        if data["shape"] == "box":
            if len(data["half_extents"]) != 3 or min(data["half_extents"]) <= 0:
                raise serializers.ValidationError({"half_extents": ["box extents must be three positive values"]})
        elif data["radius"] <= 0 or data["half_length"] < 0:
            raise serializers.ValidationError({"radius": ["capsules need radius > 0 and half_length >= 0"]})
        if data["mobility"] == "free" and data["mass"] <= 0:
            raise serializers.ValidationError({"mass": ["free objects need a positive mass"]})
        return data


class SceneSerializer(VersionedSerializer):
    name = serializers.CharField()
    objects = serializers.ListField(child=SceneObjectSerializer(), required=False, default=list)

    def validate_objects(self, objects):
        names = [o["name"] for o in objects]
        if len(set(names)) != len(names):
            raise serializers.ValidationError("object names must be unique")
        return objects
