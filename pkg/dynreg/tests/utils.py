import os
import unittest
from functools import lru_cache

import numpy as np

from humanoid_model.loaders import load_model_file, load_scene_file
from math_pose.models import Pose, Quat

slow = unittest.skipUnless(os.environ.get("DYNREG_SLOW_TESTS") == "1", "set DYNREG_SLOW_TESTS=1 for desk-scale runs")


@lru_cache(maxsize=None)
def bundled_model(name):
    return load_model_file(name)


@lru_cache(maxsize=None)
def bundled_scene(name):
    return load_scene_file(name)


def random_quat(rng):
    while True:
        q = rng.normal(size=4)
        if np.linalg.norm(q) > 0.1:
            return Quat.from_array(q)


def random_pose(model, rng, angle_scale=0.5, height=1.0):
    return Pose(
        np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), height]),
        random_quat(rng),
        rng.uniform(-angle_scale, angle_scale, size=model.num_angles),
    )


def chain_model_text(tip_offset=(1.0, 0.0, 0.0)):
    """Root, two unit links along x, and a fixed tip marker."""
    return f"""{{
      "format_version": "1.0",
      "name": "two_link",
      "bodies": [
        {{"name": "root", "parent": -1, "joint": "free", "offset": [0, 0, 0], "radius": 0.05, "half_length": 0.0, "density": 1000}},
        {{"name": "upper", "parent": 0, "offset": [0, 0, 0], "radius": 0.05, "half_length": 0.5, "density": 1000,
          "capsule_center": [0.5, 0, 0], "capsule_axis": [1, 0, 0], "kp": [10, 10, 10], "kd": [1, 1, 1]}},
        {{"name": "lower", "parent": 1, "offset": [1, 0, 0], "radius": 0.05, "half_length": 0.5, "density": 1000,
          "capsule_center": [0.5, 0, 0], "capsule_axis": [1, 0, 0], "kp": [10, 10, 10], "kd": [1, 1, 1]}},
        {{"name": "tip", "parent": 2, "joint": "fixed", "offset": {list(tip_offset)}, "radius": 0.01, "half_length": 0.0, "density": 1000}}
      ]
    }}"""
