from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from django.conf import settings

from dynreg.exceptions import ConfigError, ShapeError
from math_pose.kinematics import finite_difference_velocity
from math_pose.models import QVel


def _frames(value, width, name, count):
    if value is None:
        return None
    arr = np.array(value, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{name} must have shape (frames, {width}), got {arr.shape}")
    if arr.shape[0] != count:
        raise ShapeError(f"{name} has {arr.shape[0]} frames, the clip has {count}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MotionFile:
    """One 30 Hz clip: ground-truth poses plus the optional scene-context channels.

    Per-frame channels:
      object_positions (T, 3), object_rotations (T, 4) of the tracked scene object
      camera (T, 7)  head-camera position and wxyz orientation
      phi (T, D)     opaque visual features
    `desired_end` is the root position the clip should end near (avoid success).
    """

    name: str
    model: str
    poses: tuple
    fps: int = settings.MOTION_FPS
    action: str = ""
    scene: str = "empty"
    object_name: str = ""
    object_class: str = "none"
    object_positions: np.ndarray = None
    object_rotations: np.ndarray = None
    camera: np.ndarray = None
    phi: np.ndarray = None
    desired_end: np.ndarray = None
    config_hash: str = ""
    format_version: str = settings.FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fps != settings.MOTION_FPS:
            raise ConfigError(f"motion clips are fixed at {settings.MOTION_FPS} fps, got {self.fps}", key="fps")
        poses = tuple(self.poses)
        if not poses:
            raise ShapeError(f"clip {self.name!r} has no frames")
        object.__setattr__(self, "poses", poses)
        count = len(poses)
        object.__setattr__(self, "object_positions", _frames(self.object_positions, 3, "object_positions", count))
        object.__setattr__(self, "object_rotations", _frames(self.object_rotations, 4, "object_rotations", count))
        object.__setattr__(self, "camera", _frames(self.camera, 7, "camera", count))
        if self.phi is not None:
            phi = np.array(self.phi, dtype=float)
            object.__setattr__(self, "phi", _frames(phi, phi.shape[-1], "phi", count))
        if self.desired_end is not None:
            object.__setattr__(self, "desired_end", np.asarray(self.desired_end, dtype=float).reshape(3))

    @property
    def num_frames(self):
        return len(self.poses)

    @property
    def dt(self):
        return 1.0 / self.fps

    @property
    def has_context(self):
        return self.camera is not None and self.phi is not None

    @cached_property
    def velocities(self):
        """Finite-difference QVel per frame; a single-frame clip is at rest."""
        if self.num_frames < 2:
            return (QVel.zeros(self.poses[0].joint_angles.size),)
        return tuple(finite_difference_velocity(self.poses, self.dt))

    def window(self, start, length):
        """The clip restricted to frames [start, start + length), clipped at its end."""
        stop = min(self.num_frames, start + length)
        if not 0 <= start < stop:
            raise ShapeError(f"window start {start} outside clip {self.name!r} of {self.num_frames} frames")

        def cut(arr):
            return None if arr is None else arr[start:stop]

        return MotionFile(
            name=f"{self.name}[{start}:{stop}]",
            model=self.model,
            poses=self.poses[start:stop],
            fps=self.fps,
            action=self.action,
            scene=self.scene,
            object_name=self.object_name,
            object_class=self.object_class,
            object_positions=cut(self.object_positions),
            object_rotations=cut(self.object_rotations),
            camera=cut(self.camera),
            phi=cut(self.phi),
            desired_end=self.desired_end,
            config_hash=self.config_hash,
            format_version=self.format_version,
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """What `gen_data` scripts: clips per action label, their length and the context channels."""

    actions: tuple = settings.ACTION_LABELS
    clips_per_action: int = 2
    held_out_per_action: int = 1
    frames: int = 90
    speed_range: tuple = (0.6, 1.2)
    phi_dim: int = settings.PHI_DIM
    phi_noise_std: float = settings.PHI_NOISE_STD
    camera_noise_std: float = settings.CAMERA_NOISE_STD

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(str(a) for a in self.actions))
        object.__setattr__(self, "speed_range", tuple(float(s) for s in self.speed_range))
        unknown = sorted(set(self.actions) - set(settings.ACTION_LABELS))
        if unknown:
            raise ConfigError(f"unknown action label {unknown[0]!r}", key="actions")
        if self.frames < 10:
            raise ConfigError(f"scripted clips need at least 10 frames, got {self.frames}", key="frames")
        if self.clips_per_action < 0 or self.held_out_per_action < 0:
            raise ConfigError("clip counts must be non-negative", key="clips_per_action")
        low, high = self.speed_range
        if not 0 < low <= high:
            raise ConfigError(f"speed_range must satisfy 0 < low <= high, got {self.speed_range}", key="speed_range")
        if self.phi_dim < 1 or min(self.phi_noise_std, self.camera_noise_std) < 0:
            raise ConfigError("phi_dim must be positive and noise levels non-negative", key="phi_dim")


@dataclass(frozen=True)
class EvalSpec:
    threshold: float = settings.FAILSAFE_THRESHOLD
    seeds: int = 1
    context_noise_std: float = settings.CONTEXT_NOISE_STD
    min_success: float = None

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold}", key="threshold")
        if self.seeds < 1:
            raise ConfigError(f"seeds must be at least 1, got {self.seeds}", key="seeds")
        if self.context_noise_std < 0:
            raise ConfigError("context_noise_std must be non-negative", key="context_noise_std")
        if self.min_success is not None and not 0.0 <= self.min_success <= 1.0:
            raise ConfigError(f"min_success must lie in [0, 1], got {self.min_success}", key="min_success")


@dataclass(frozen=True, eq=False)
class RunConfig:
    """One pipeline run. `seed` and `num_workers` override the per-stage configs."""

    model: str = "default25"
    scene: str = "empty"
    dataset: str = ""
    held_out: str = ""
    output_dir: str = str(settings.OUTPUT_DIR)
    seed: int = settings.SEED
    num_workers: int = settings.NUM_THREADS
    pd_mode: str = settings.PD_MODE
    uhc: object = None
    kin: object = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    eval: EvalSpec = field(default_factory=EvalSpec)
    config_hash: str = ""

    @property
    def output_path(self):
        return Path(self.output_dir)

    @property
    def clips_dir(self):
        return self.output_path / "clips"

    @property
    def dataset_glob(self):
        return self.dataset or str(self.clips_dir / "train" / "*.json")

    @property
    def held_out_glob(self):
        return self.held_out or str(self.clips_dir / "held_out" / "*.json")

    def as_dict(self):
        """Everything that shapes the results; the output directory is left out."""
        return {
            "model": self.model,
            "scene": self.scene,
            "dataset": self.dataset,
            "held_out": self.held_out,
            "seed": self.seed,
            "num_workers": self.num_workers,
            "pd_mode": self.pd_mode,
            "uhc": _plain(self.uhc.as_dict()),
            "kin": _plain(self.kin.as_dict()),
            "synthetic": _plain(asdict(self.synthetic)),
            "eval": _plain(asdict(self.eval)),
        }


def _plain(values):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}
