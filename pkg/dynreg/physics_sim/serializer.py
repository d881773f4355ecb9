"""Trajectory dumps: JSON-lines, one header record then one record per control step."""

import json
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework import serializers

from dynreg.exceptions import ConfigError
from humanoid_model.loaders import first_error
from humanoid_model.serializer import StrictSerializer, VersionedSerializer, triplet
from math_pose.models import Pose, QVel


class ObjectPoseSerializer(StrictSerializer):
    name = serializers.CharField()
    position = triplet()
    rotation = serializers.ListField(child=serializers.FloatField(), min_length=4, max_length=4)


class TrajectoryHeaderSerializer(VersionedSerializer):
    record = serializers.ChoiceField(choices=["header"])
    model = serializers.CharField()
    scene = serializers.CharField()
    fps = serializers.IntegerField(min_value=1)
    config_hash = serializers.CharField(allow_blank=True, default="")
    clip = serializers.CharField(allow_blank=True, default="")
    action = serializers.CharField(allow_blank=True, default="")


class TrajectoryFrameSerializer(StrictSerializer):
    record = serializers.ChoiceField(choices=["frame"])
    step = serializers.IntegerField(min_value=0)
    sim_time = serializers.FloatField(min_value=0.0)
    q = serializers.ListField(child=serializers.FloatField(), min_length=7)
    qdot = serializers.ListField(child=serializers.FloatField(), min_length=6)
    objects = ObjectPoseSerializer(many=True, required=False, default=list)
    contact_count = serializers.IntegerField(min_value=0)
    penetration_mm = serializers.FloatField(min_value=0.0)
    reset = serializers.BooleanField(default=False)

    def validate(self, data):
        if len(data["q"]) - 7 != len(data["qdot"]) - 6:
            raise serializers.ValidationError("q and qdot describe different joint counts")
        return data


def frame_record(step, state, scene, penetration_mm, reset=False):
    return {
        "record": "frame",
        "step": step,
        "sim_time": float(state.sim_time),
        "q": state.q.as_vector().tolist(),
        "qdot": state.qdot.as_vector().tolist(),
        "objects": [
            {"name": obj.name, "position": s.position.tolist(), "rotation": s.rotation.array.tolist()}
            for obj, s in zip(scene.objects, state.objects)
        ],
        "contact_count": len(state.contacts),
        "penetration_mm": float(penetration_mm),
        "reset": bool(reset),
    }


class TrajectoryDump:
    """Single-writer JSON-lines dump of a simulated rollout."""

    def __init__(self, path, model, scene, config_hash="", clip="", action=""):
        self.path = Path(path)
        self.scene = scene
        self.header = {
            "record": "header",
            "format_version": settings.FORMAT_VERSION,
            "model": model.name,
            "scene": scene.name,
            "fps": settings.MOTION_FPS,
            "config_hash": config_hash,
            "clip": clip,
            "action": action,
        }
        self._handle = None
        self._step = 0

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w")
        self._write(self.header)
        return self

    def __exit__(self, *exc_info):
        self._handle.close()
        self._handle = None

    def _write(self, record):
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")

    def write(self, state, penetration_mm, reset=False):
        self._write(frame_record(self._step, state, self.scene, penetration_mm, reset))
        self._step += 1


def read_trajectory_dump(path):
    """Validated (header, frames); frames carry Pose/QVel objects plus the raw fields."""
    path = Path(path)
    try:
        lines = [line for line in path.read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read trajectory dump: {exc}", path=path) from exc
    if not lines:
        raise ConfigError("trajectory dump is empty", path=path)

    records = []
    for number, line in enumerate(lines, start=1):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {number}: invalid JSON: {exc}", path=path) from exc

    header = TrajectoryHeaderSerializer(data=records[0])
    if not header.is_valid():
        key, message, _ = first_error(header.errors)
        raise ConfigError(f"header: {key}: {message}", path=path, key=key)

    frames = []
    for number, record in enumerate(records[1:], start=2):
        frame = TrajectoryFrameSerializer(data=record)
        if not frame.is_valid():
            key, message, _ = first_error(frame.errors)
            raise ConfigError(f"line {number}: {key}: {message}", path=path, key=key)
        data = dict(frame.validated_data)
        data["pose"] = Pose.from_vector(np.asarray(data["q"]))
        data["velocity"] = QVel.from_vector(np.asarray(data["qdot"]))
        frames.append(data)
    return dict(header.validated_data), frames
