from dataclasses import dataclass, field, fields, replace

import numpy as np
from django.conf import settings

from dynreg.exceptions import ConfigError, DomainError, ShapeError
from math_pose.models import Pose, QVel, Quat
from math_pose.rotations import quat_to_matrix


def _vec3(value, name):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ShapeError(f"{name} must have 3 components, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class SimParams:
    """Integrator, contact and actuation constants of one simulator instance.

    conserve_momentum: after each substep the root linear velocity is shifted so
    the humanoid's linear momentum equals its value before the substep plus
    dt times the external force (contacts, residual wrench, gravity). Semi-implicit
    Euler on the articulated chain drifts by about a percent of the momentum over a
    second of free flight without it; set False to see the raw integrator.
    """

    dt: float = settings.SIM_DT
    substeps: int = settings.SIM_SUBSTEPS
    gravity: tuple = settings.GRAVITY
    contact_stiffness: float = settings.CONTACT_STIFFNESS
    contact_damping: float = settings.CONTACT_DAMPING
    friction_mu: float = settings.FRICTION_MU
    friction_viscosity: float = settings.FRICTION_VISCOSITY
    pd_mode: str = settings.PD_MODE
    force_ceiling: float = settings.RESIDUAL_FORCE_CEILING
    torque_ceiling: float = settings.RESIDUAL_TORQUE_CEILING
    divergence_limit: float = settings.DIVERGENCE_LIMIT
    conserve_momentum: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.substeps < 1:
            raise ConfigError(f"need dt > 0 and substeps >= 1, got dt={self.dt}, substeps={self.substeps}")
        if self.pd_mode not in ("stable", "explicit"):
            raise ConfigError(f"pd_mode must be 'stable' or 'explicit', got {self.pd_mode!r}", key="pd_mode")
        if min(self.contact_stiffness, self.contact_damping, self.friction_mu, self.friction_viscosity) < 0:
            raise ConfigError("contact constants must be non-negative")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    @classmethod
    def from_settings(cls, **overrides):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown simulation parameter {unknown[0]!r}", key=unknown[0])
        return cls(**overrides)

    def with_changes(self, **changes):
        return replace(self, **changes)

    @property
    def control_dt(self):
        return self.dt * self.substeps


@dataclass(frozen=True, eq=False)
class ObjectState:
    position: np.ndarray
    rotation: Quat = field(default_factory=Quat.identity)
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "object position"))
        if not isinstance(self.rotation, Quat):
            object.__setattr__(self, "rotation", Quat.from_array(self.rotation))
        object.__setattr__(self, "lin_vel", _vec3(self.lin_vel, "object lin_vel"))
        object.__setattr__(self, "ang_vel", _vec3(self.ang_vel, "object ang_vel"))

    @classmethod
    def at_rest(cls, scene_object):
        return cls(scene_object.position.copy(), scene_object.rotation)

    @property
    def matrix(self):
        return quat_to_matrix(self.rotation)


@dataclass(frozen=True, eq=False)
class ContactPoint:
    """One active contact; the normal points from the scene toward the humanoid body."""

    body: int
    point: np.ndarray
    normal: np.ndarray
    depth: float
    normal_force: float = 0.0
    friction_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    other: str = "ground"
    kind: str = "ground"

    def __post_init__(self):
        if self.depth < 0:
            raise DomainError(f"contact depth must be non-negative, got {self.depth}")
        normal = _vec3(self.normal, "contact normal")
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            raise DomainError("contact normal must be non-zero")
        object.__setattr__(self, "normal", normal / norm)
        object.__setattr__(self, "point", _vec3(self.point, "contact point"))
        object.__setattr__(self, "friction_force", _vec3(self.friction_force, "friction force"))
        object.__setattr__(self, "depth", float(self.depth))
        object.__setattr__(self, "normal_force", float(self.normal_force))

    @property
    def with_scene(self):
        """True for humanoid contacts against the ground or a scene object."""
        return self.kind in ("ground", "object")


def clamp_wrench(wrench, force_ceiling, torque_ceiling):
    """Scale force and torque parts independently so their norms stay within the ceilings."""
    wrench = np.array(wrench, dtype=float).reshape(6)
    for part, ceiling in ((slice(0, 3), force_ceiling), (slice(3, 6), torque_ceiling)):
        norm = np.linalg.norm(wrench[part])
        if norm > ceiling:
            wrench[part] *= ceiling / norm
    return wrench


@dataclass(frozen=True, eq=False)
class ControlInput:
    pd_target: np.ndarray
    residual_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        target = np.array(self.pd_target, dtype=float).reshape(-1)
        wrench = np.array(self.residual_wrench, dtype=float).reshape(-1)
        if wrench.shape != (6,):
            raise ShapeError(f"residual wrench must have 6 components, got {wrench.shape[0]}")
        if not (np.all(np.isfinite(target)) and np.all(np.isfinite(wrench))):
            raise DomainError("control input has non-finite entries")
        object.__setattr__(self, "pd_target", target)
        object.__setattr__(self, "residual_wrench", wrench)

    @classmethod
    def hold(cls, pose):
        """PD targets equal to the pose's joint angles and no residual wrench."""
        return cls(pose.joint_angles.copy())

    @property
    def force(self):
        return self.residual_wrench[:3]

    @property
    def torque(self):
        return self.residual_wrench[3:]

    def check(self, model):
        if self.pd_target.size != model.num_angles:
            raise ShapeError(
                f"pd_target has {self.pd_target.size} entries, model {model.name!r} has {model.num_angles} joint DoF"
            )


@dataclass(frozen=True, eq=False)
class SimState:
    q: Pose
    qdot: QVel
    objects: tuple = ()
    contacts: tuple = ()
    sim_time: float = 0.0

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def object_poses(self):
        return [(o.position, o.rotation) for o in self.objects]

    @property
    def scene_contacts(self):
        return [c for c in self.contacts if c.with_scene]
