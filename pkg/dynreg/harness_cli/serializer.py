import glob
import hashlib
import json
import logging
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import yaml
from django.conf import settings
from rest_framework import serializers

from dynreg.exceptions import ConfigError, InsufficientDataError
from humanoid_model.loaders import first_error
from humanoid_model.models import ObjectClass
from humanoid_model.serializer import StrictSerializer, VersionedSerializer
from kin_policy.models import KinConfig
from math_pose.models import Pose
from uhc.models import UHCConfig

from .models import EvalSpec, MotionFile, RunConfig, SyntheticSpec

logger = logging.getLogger(__name__)

# global knobs of a run; the per-stage sections may not repeat them
GLOBAL_KEYS = ("seed", "num_workers")


def rows(width=None, **kwargs):
    row = serializers.ListField(child=serializers.FloatField(), min_length=width, max_length=width)
    return serializers.ListField(child=row, **kwargs)


class MotionFileSerializer(VersionedSerializer):
    name = serializers.CharField()
    model = serializers.CharField()
    fps = serializers.IntegerField(default=settings.MOTION_FPS)
    action = serializers.CharField(allow_blank=True, default="")
    scene = serializers.CharField(default="empty")
    object_name = serializers.CharField(allow_blank=True, default="")
    object_class = serializers.ChoiceField(choices=[c.value for c in ObjectClass], default=ObjectClass.NONE.value)
    poses = rows(min_length=1)
    object_positions = rows(3, required=False, allow_null=True, default=None)
    object_rotations = rows(4, required=False, allow_null=True, default=None)
    camera = rows(7, required=False, allow_null=True, default=None)
    phi = rows(required=False, allow_null=True, default=None)
    desired_end = serializers.ListField(
        child=serializers.FloatField(), min_length=3, max_length=3, required=False, allow_null=True, default=None
    )
    config_hash = serializers.CharField(allow_blank=True, default="")

    def validate_fps(self, value):
        if value != settings.MOTION_FPS:
            raise serializers.ValidationError(f"motion clips are fixed at {settings.MOTION_FPS} fps")
        return value

    def validate_action(self, value):
        if value and value not in settings.ACTION_LABELS:
            raise serializers.ValidationError(f"unknown action label; known: {', '.join(settings.ACTION_LABELS)}")
        return value

    def validate_poses(self, value):
        widths = {len(row) for row in value}
        if len(widths) != 1:
            raise serializers.ValidationError("every pose row must have the same length")
        width = widths.pop()
        if width < 7 or (width - 7) % 3:
            raise serializers.ValidationError(f"pose rows need 7 + 3k values, got {width}")
        return value

    def validate(self, data):
        count = len(data["poses"])
        for key in ("object_positions", "object_rotations", "camera", "phi"):
            value = data.get(key)
            if value is None:
                continue
            if len(value) != count:
                raise serializers.ValidationError({key: [f"has {len(value)} frames, the clip has {count}"]})
            if len({len(row) for row in value}) > 1:
                raise serializers.ValidationError({key: ["every row must have the same length"]})
        for key, value in data.items():
            if key in ("poses", "object_positions", "object_rotations", "camera", "phi", "desired_end") \
                    and value is not None and not np.all(np.isfinite(np.asarray(value, dtype=float))):
                raise serializers.ValidationError({key: ["values must be finite"]})
        if (data.get("camera") is None) != (data.get("phi") is None):
            raise serializers.ValidationError("camera and phi channels come together")
        return data


def motion_record(clip):
    def column(arr):
        return None if arr is None else np.asarray(arr).tolist()

    return {
        "format_version": clip.format_version,
        "name": clip.name,
        "model": clip.model,
        "fps": clip.fps,
        "action": clip.action,
        "scene": clip.scene,
        "object_name": clip.object_name,
        "object_class": clip.object_class,
        "poses": [p.as_vector().tolist() for p in clip.poses],
        "object_positions": column(clip.object_positions),
        "object_rotations": column(clip.object_rotations),
        "camera": column(clip.camera),
        "phi": column(clip.phi),
        "desired_end": column(clip.desired_end),
        "config_hash": clip.config_hash,
    }


def write_motion_file(path, clip):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(motion_record(clip), sort_keys=True) + "\n")
    return path


def read_motion_file(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read motion file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"motion file is not valid JSON: {exc}", path=path) from exc
    serializer = MotionFileSerializer(data=data)
    if not serializer.is_valid():
        key, message, _ = first_error(serializer.errors)
        raise ConfigError(f"{key}: {message}", path=path, key=key)
    data = dict(serializer.validated_data)
    data["poses"] = [Pose.from_vector(np.asarray(row)) for row in data["poses"]]
    return MotionFile(**data)


def load_clips(pattern, model=None):
    """Motion files matching a glob, in sorted path order."""
    paths = sorted(glob.glob(str(pattern)))
    if not paths:
        raise InsufficientDataError(f"no motion files match {pattern}")
    clips = [read_motion_file(p) for p in paths]
    if model is not None:
        for path, clip in zip(paths, clips):
            if clip.model != model.name:
                raise ConfigError(f"clip {clip.name!r} targets model {clip.model!r}, not {model.name!r}",
                                  path=path, key="model")
    logger.info("loaded %d clips from %s", len(clips), pattern)
    return clips


def _child(value, **kwargs):
    if isinstance(value, bool):
        return serializers.BooleanField(**kwargs)
    if isinstance(value, int):
        return serializers.IntegerField(**kwargs)
    if isinstance(value, float):
        return serializers.FloatField(**kwargs)
    return serializers.CharField(**kwargs)


def _field_for(default):
    if default is None:
        return serializers.FloatField(allow_null=True, default=None)
    if isinstance(default, tuple):
        return serializers.ListField(child=_child(default[0]), default=lambda: list(default))
    if isinstance(default, str):
        return serializers.CharField(allow_blank=True, default=default)
    return _child(default, default=default)


def dataclass_serializer(cls, skip=()):
    """StrictSerializer over a config dataclass, each field defaulting to the dataclass default."""
    attrs = {f.name: _field_for(f.default) for f in fields(cls) if f.name not in skip}
    return type(f"{cls.__name__}Serializer", (StrictSerializer,), attrs)


UHCConfigSerializer = dataclass_serializer(UHCConfig, skip=GLOBAL_KEYS)
KinConfigSerializer = dataclass_serializer(KinConfig, skip=GLOBAL_KEYS)
SyntheticSpecSerializer = dataclass_serializer(SyntheticSpec)
EvalSpecSerializer = dataclass_serializer(EvalSpec)


class RunConfigSerializer(VersionedSerializer):
    format_version = serializers.CharField(default=settings.FORMAT_VERSION)
    model = serializers.CharField(default="default25")
    scene = serializers.CharField(default="empty")
    dataset = serializers.CharField(allow_blank=True, default="")
    held_out = serializers.CharField(allow_blank=True, default="")
    output_dir = serializers.CharField(default=str(settings.OUTPUT_DIR))
    seed = serializers.IntegerField(min_value=0, default=settings.SEED)
    num_workers = serializers.IntegerField(min_value=1, default=settings.NUM_THREADS)
    pd_mode = serializers.ChoiceField(choices=["stable", "explicit"], default=settings.PD_MODE)
    uhc = UHCConfigSerializer(required=False)
    kin = KinConfigSerializer(required=False)
    synthetic = SyntheticSpecSerializer(required=False)
    eval = EvalSpecSerializer(required=False)


def config_hash(config):
    canonical = json.dumps(config.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _section(cls, section, values, path):
    try:
        return cls.from_dict(values) if hasattr(cls, "from_dict") else cls(**values)
    except ConfigError as exc:
        key = f"{section}.{exc.key}" if exc.key else section
        raise ConfigError(str(exc), path=path, key=key) from exc


def build_run_config(data, path=None):
    globals_ = {key: data[key] for key in GLOBAL_KEYS}
    config = RunConfig(
        model=data["model"],
        scene=data["scene"],
        dataset=data["dataset"],
        held_out=data["held_out"],
        output_dir=data["output_dir"],
        seed=data["seed"],
        num_workers=data["num_workers"],
        pd_mode=data["pd_mode"],
        uhc=_section(UHCConfig, "uhc", {**data.get("uhc", {}), **globals_}, path),
        kin=_section(KinConfig, "kin", {**data.get("kin", {}), **globals_}, path),
        synthetic=_section(SyntheticSpec, "synthetic", dict(data.get("synthetic", {})), path),
        eval=_section(EvalSpec, "eval", dict(data.get("eval", {})), path),
    )
    return replace(config, config_hash=config_hash(config))


def load_run_config(path=None, **overrides):
    """RunConfig from a YAML or JSON file (or all defaults); non-None overrides win over the file."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read run config: {exc}", path=path) from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"run config is not valid YAML: {exc}", path=path) from exc
        data = {} if data is None else data
        if not isinstance(data, dict):
            raise ConfigError("run config must be a mapping", path=path)
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}

    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        key, message, _ = first_error(serializer.errors)
        raise ConfigError(f"{key}: {message}", path=path, key=key)
    config = build_run_config(serializer.validated_data, path)
    logger.debug("run config %s (hash %s)", path or "<defaults>", config.config_hash)
    return config
