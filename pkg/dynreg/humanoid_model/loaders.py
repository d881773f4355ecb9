import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework.exceptions import ErrorDetail

from dynreg.exceptions import ConfigError, TopologyError
from math_pose.models import Quat

from .models import BodySpec, HumanoidModel, JointType, Mobility, ObjectClass, Scene, SceneObject
from .serializer import HumanoidModelSerializer, SceneSerializer

logger = logging.getLogger(__name__)


def first_error(errors, prefix=""):
    """Flatten DRF's nested error structure to (dotted key, message, code)."""
    if isinstance(errors, dict):
        for key, value in errors.items():
            found = first_error(value, f"{prefix}.{key}" if prefix else str(key))
            if found:
                return found
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                found = first_error(value, f"{prefix}.{index}" if prefix else str(index))
                if found:
                    return found
            elif value:
                code = value.code if isinstance(value, ErrorDetail) else None
                return prefix or "non_field_errors", str(value), code
    return None


def validated(serializer_class, text, path=None):
    """Parse JSON text and run a serializer; raise ConfigError with path/key on failure."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", path=path) from exc
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        key, message, code = first_error(serializer.errors)
        error_class = TopologyError if code == "topology" else ConfigError
        raise error_class(f"{key}: {message}", path=path, key=key)
    return serializer.validated_data


def build_model(data):
    bodies = tuple(
        BodySpec(
            name=b["name"],
            parent=b["parent"],
            offset=tuple(b["offset"]),
            radius=b["radius"],
            half_length=b["half_length"],
            density=b["density"],
            joint=JointType(b["joint"]),
            kp=tuple(b["kp"]),
            kd=tuple(b["kd"]),
            joint_limits=tuple(tuple(pair) for pair in b["joint_limits"]),
            capsule_center=tuple(b["capsule_center"]),
            capsule_axis=tuple(b["capsule_axis"]),
        )
        for b in data["bodies"]
    )
    return HumanoidModel(
        name=data["name"],
        bodies=bodies,
        roles=dict(data["roles"]),
        collision_pairs=tuple(tuple(p) for p in data["collision_pairs"]),
        format_version=data["format_version"],
    )


def load_model(config_text, path=None):
    """Build a validated HumanoidModel from JSON text."""
    model = build_model(validated(HumanoidModelSerializer, config_text, path))
    logger.debug("loaded model %s: %d bodies, %d coordinates", model.name, model.num_bodies, model.nq)
    return model


def resolve_fixture(name_or_path, kind):
    """Bundled fixture name ("default25") or a filesystem path."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        return path
    return Path(settings.FIXTURES_DIR) / f"{kind}_{name_or_path}.json"


def load_model_file(name_or_path):
    path = resolve_fixture(name_or_path, "model")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read model config: {exc}", path=path) from exc
    return load_model(text, path=path)


def build_scene(data):
    objects = tuple(
        SceneObject(
            name=o["name"],
            obj_class=ObjectClass(o["obj_class"]),
            shape=o["shape"],
            position=np.asarray(o["position"]),
            rotation=Quat.from_array(o["rotation"]),
            mobility=Mobility(o["mobility"]),
            mass=o["mass"],
            half_extents=tuple(o["half_extents"]),
            radius=o["radius"],
            half_length=o["half_length"],
        )
        for o in data["objects"]
    )
    return Scene(name=data["name"], objects=objects, format_version=data["format_version"])


def load_scene(config_text, path=None):
    return build_scene(validated(SceneSerializer, config_text, path))


def load_scene_file(name_or_path):
    path = resolve_fixture(name_or_path, "scene")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scene config: {exc}", path=path) from exc
    return load_scene(text, path=path)
