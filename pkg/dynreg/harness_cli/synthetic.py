"""Procedurally scripted motion clips standing in for motion capture.

Every action label gets a scripted root path (position, height, heading) and
a few leg parameters; poses follow from those, so finite differences of the
emitted poses reproduce the scripted speeds. Context channels:
  camera  the head camera of each ground-truth pose plus noise
  phi     a fixed random projection of heading-frame velocities plus noise
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from humanoid_model.loaders import load_scene_file
from humanoid_model.poses import adjust_start_height
from math_pose.models import Pose, canonicalize
from math_pose.rotations import exp_map, heading_angle, quat_multiply, yaw_matrix, yaw_quat
from metrics_eval.errors import camera_row, camera_transform

from .models import MotionFile, SyntheticSpec
from .serializer import write_motion_file

logger = logging.getLogger(__name__)

SCENES = {"sit": "chair", "push": "box_push", "step": "box_step", "avoid": "obstacle", "walk": "empty"}

STRIDE_LENGTH = 1.2  # m of root travel per gait cycle
SWING_AMPLITUDE = 0.35  # rad
SIT_FLEX = 1.4  # rad of hip flexion when seated
REACH = 0.25  # m between the body and a pushed box
OBSTACLE_CLEARANCE = 0.45  # m added to the obstacle radius on a detour


@dataclass
class Script:
    """Per-frame root path and leg parameters of one clip."""

    xy: np.ndarray
    height: np.ndarray
    yaw: np.ndarray
    flex: np.ndarray
    object_positions: np.ndarray = None
    desired_end: np.ndarray = None
    gait: np.ndarray = None

    @property
    def swing(self):
        travelled = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(self.xy, axis=0), axis=1))])
        gait = 1.0 if self.gait is None else self.gait
        return SWING_AMPLITUDE * np.sin(2.0 * np.pi * travelled / STRIDE_LENGTH) * gait


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _phase(count, start, stop):
    """Progress in [0, 1] over frames [start, stop) of a clip with `count` frames."""
    frames = np.arange(count, dtype=float)
    return np.clip((frames - start) / max(stop - start - 1, 1), 0.0, 1.0)


def _approach(count, stop_xy, direction, speed, frames):
    """Straight walk at `speed` ending on stop_xy after `frames` frames, then holding there."""
    dt = 1.0 / settings.MOTION_FPS
    distance = speed * (frames - 1) * dt
    start = stop_xy - distance * direction
    t = np.minimum(np.arange(count), frames - 1)[:, None]
    return start + direction * speed * t * dt


def script_walk(count, speed, heading, base_height, scene):
    dt = 1.0 / settings.MOTION_FPS
    direction = np.array([np.cos(heading), np.sin(heading)])
    xy = np.arange(count)[:, None] * speed * dt * direction
    return Script(xy, np.full(count, base_height), np.full(count, heading), np.zeros(count))


def script_sit(count, speed, heading, base_height, scene, seat_clearance=0.0):
    chair = scene.primary
    direction = np.array([np.cos(heading), np.sin(heading)])
    stop = chair.position[:2] - (chair.half_extents[0] + 0.25) * direction
    walk, turn = count // 2, count // 2 + count // 5
    xy = _approach(count, stop, direction, speed, walk)
    sit = smoothstep(_phase(count, turn, count))[:, None]
    xy = xy * (1.0 - sit) + chair.position[:2] * sit
    yaw = heading + np.pi * smoothstep(_phase(count, walk, turn))
    height = base_height + (chair.top_height + seat_clearance - base_height) * sit[:, 0]
    return Script(xy, height, yaw, SIT_FLEX * sit[:, 0], gait=1.0 - sit[:, 0])


def script_push(count, speed, heading, base_height, scene):
    box = scene.primary
    direction = np.array([np.cos(heading), np.sin(heading)])
    contact = box.position[:2] - (box.half_extents[0] + REACH) * direction
    walk = (3 * count) // 5
    xy = _approach(count, contact, direction, speed, walk)
    dt = 1.0 / settings.MOTION_FPS
    pushed = np.maximum(np.arange(count) - (walk - 1), 0)[:, None] * 0.5 * speed * dt
    xy = xy + pushed * direction
    objects = np.tile(box.position, (count, 1))
    objects[:, :2] += pushed * direction
    return Script(xy, np.full(count, base_height), np.full(count, heading), np.zeros(count), objects)


def script_step(count, speed, heading, base_height, scene):
    box = scene.primary
    direction = np.array([np.cos(heading), np.sin(heading)])
    edge = box.position[:2] - (box.half_extents[0] + 0.15) * direction
    walk, up = count // 2, count // 2 + (3 * count) // 10
    xy = _approach(count, edge, direction, speed, walk)
    rise = smoothstep(_phase(count, walk, up))
    xy = xy * (1.0 - rise[:, None]) + box.position[:2] * rise[:, None]
    return Script(xy, base_height + box.top_height * rise, np.full(count, heading), np.zeros(count))


def script_avoid(count, speed, heading, base_height, scene, side=1.0):
    obstacle = scene.primary
    dt = 1.0 / settings.MOTION_FPS
    direction = np.array([np.cos(heading), np.sin(heading)])
    lateral = np.array([-direction[1], direction[0]])
    length = speed * (count - 1) * dt
    start = obstacle.position[:2] - 0.5 * length * direction
    u = np.arange(count) / (count - 1)
    amplitude = side * (obstacle.radius + OBSTACLE_CLEARANCE)
    xy = start + length * u[:, None] * direction + amplitude * np.sin(np.pi * u)[:, None] * lateral
    slope = np.arctan2(amplitude * np.pi * np.cos(np.pi * u), length)
    end = np.append(start + length * direction, base_height)
    return Script(xy, np.full(count, base_height), heading + slope, np.zeros(count), desired_end=end)


SCRIPTS = {"walk": script_walk, "sit": script_sit, "push": script_push, "step": script_step, "avoid": script_avoid}


def _pelvis(model):
    return model.role("pelvis") if "pelvis" in model.roles else 0


def script_poses(model, script):
    legs = model.role("leg_roots") if "leg_roots" in model.roles else []
    poses = []
    for t, swing in enumerate(script.swing):
        angles = np.zeros((model.num_angles // 3, 3))
        for side, body in enumerate(legs):
            sign = 1.0 if side % 2 == 0 else -1.0
            angles[model.joint_slot[body], 1] = sign * swing - script.flex[t]
        poses.append(Pose(
            np.append(script.xy[t], script.height[t]),
            yaw_quat(script.yaw[t]),
            angles.reshape(-1),
        ))
    return poses


def camera_track(model, poses, rng, noise_std):
    rows = np.stack([camera_row(camera_transform(model, pose)) for pose in poses])
    if noise_std > 0:
        rows = perturb_camera(rows, rng, noise_std)
    return rows


def perturb_camera(rows, rng, noise_std):
    rows = np.array(rows, dtype=float)
    rows[:, :3] += rng.normal(0.0, noise_std, size=(len(rows), 3))
    for row in rows:
        turned = quat_multiply(exp_map(rng.normal(0.0, noise_std, size=3)).array, row[3:])
        row[3:] = canonicalize(turned)
    return rows


def feature_projection(model, phi_dim, seed):
    """Fixed (phi_dim, nv) projection shared by every clip of a dataset."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    return rng.normal(size=(phi_dim, model.nv)) / np.sqrt(model.nv)


def phi_track(clip_velocities, poses, projection, rng, noise_std):
    """phi[t] encodes the motion that arrives at frame t; frame 0 repeats the first step."""
    rows = []
    for t in range(len(poses)):
        source = max(t - 1, 0)
        velocity = clip_velocities[source]
        heading = yaw_matrix(-heading_angle(poses[source].root_rot))
        local = np.concatenate([heading @ velocity.root_lin_vel, heading @ velocity.root_ang_vel, velocity.joint_vel])
        rows.append(projection @ local)
    rows = np.stack(rows)
    if noise_std > 0:
        rows = rows + rng.normal(0.0, noise_std, size=rows.shape)
    return rows


def scripted_clip(model, action, name, spec, rng, projection, scene, base_height, config_hash=""):
    speed = rng.uniform(*spec.speed_range)
    heading = rng.uniform(-np.pi, np.pi) if action == "walk" else rng.uniform(-np.pi / 4, np.pi / 4)
    kwargs = {}
    if action == "avoid":
        kwargs["side"] = float(rng.choice([-1.0, 1.0]))
    elif action == "sit":
        kwargs["seat_clearance"] = float(model.radii[_pelvis(model)])
    script = SCRIPTS[action](spec.frames, speed, heading, base_height, scene, **kwargs)
    poses = script_poses(model, script)

    obj = scene.primary
    channels = {}
    if obj is not None:
        positions = script.object_positions
        channels = dict(
            object_name=obj.name,
            object_class=obj.obj_class.value,
            object_positions=np.tile(obj.position, (spec.frames, 1)) if positions is None else positions,
            object_rotations=np.tile(obj.rotation.array, (spec.frames, 1)),
        )
    clip = MotionFile(
        name=name, model=model.name, poses=poses, action=action, scene=scene.name,
        desired_end=script.desired_end, config_hash=config_hash, extra={"speed": speed}, **channels,
    )
    return replace(
        clip,
        camera=camera_track(model, poses, rng, spec.camera_noise_std),
        phi=phi_track(clip.velocities, poses, projection, rng, spec.phi_noise_std),
    )


def gen_synthetic_dataset(model, spec=None, seed=settings.SEED, config_hash=""):
    """(training clips, held-out clips) scripted for every action label of `spec`.

    Clip k of action a in split s draws from SeedSequence(seed, spawn_key=(1,
    a, s, k)), so adding labels or clips leaves the existing ones unchanged.
    """
    spec = spec or SyntheticSpec()
    projection = feature_projection(model, spec.phi_dim, seed)
    base_height = adjust_start_height(model, Pose.identity(model.num_angles)).root_pos[2]
    train, held_out = [], []
    for action in spec.actions:
        scene = load_scene_file(SCENES[action])
        a = settings.ACTION_LABELS.index(action)
        for split, (count, out, suffix) in enumerate(
            [(spec.clips_per_action, train, ""), (spec.held_out_per_action, held_out, "held_")]
        ):
            for k in range(count):
                rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, a, split, k)))
                name = f"{action}_{suffix}{k:03d}"
                out.append(scripted_clip(model, action, name, spec, rng, projection, scene, base_height, config_hash))
    logger.info("scripted %d training and %d held-out clips on %s", len(train), len(held_out), model.name)
    return train, held_out


def perturb_context(clip, rng, noise_std):
    """The clip with seeded noise added to its camera and phi channels."""
    if noise_std <= 0 or not clip.has_context:
        return clip
    return replace(
        clip,
        camera=perturb_camera(clip.camera, rng, noise_std),
        phi=clip.phi + rng.normal(0.0, noise_std, size=clip.phi.shape),
    )


def write_dataset(directory, train, held_out):
    directory = Path(directory)
    paths = [write_motion_file(directory / "train" / f"{clip.name}.json", clip) for clip in train]
    paths += [write_motion_file(directory / "held_out" / f"{clip.name}.json", clip) for clip in held_out]
    return paths
