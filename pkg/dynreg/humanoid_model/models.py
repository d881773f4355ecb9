from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from dynreg.exceptions import ConfigError, DomainError
from math_pose.models import Quat

from .geometry import box_inertia, capsule_inertia, capsule_mass, capsule_segment


class JointType(str, Enum):
    FREE = "free"
    BALL = "ball"
    FIXED = "fixed"

    @property
    def dof(self):
        return {"free": 6, "ball": 3, "fixed": 0}[self.value]


class ObjectClass(str, Enum):
    CHAIR = "chair"
    BOX = "box"
    OBSTACLE = "obstacle"
    NONE = "none"


class Mobility(str, Enum):
    STATIC = "static"
    FREE = "free"


OBJECT_CLASSES = (ObjectClass.CHAIR, ObjectClass.BOX, ObjectClass.OBSTACLE)


@dataclass(frozen=True)
class BodySpec:
    name: str
    parent: int
    offset: tuple
    radius: float
    half_length: float
    density: float
    joint: JointType = JointType.BALL
    kp: tuple = ()
    kd: tuple = ()
    joint_limits: tuple = ()
    capsule_center: tuple = (0.0, 0.0, 0.0)
    capsule_axis: tuple = (0.0, 0.0, 1.0)

    @property
    def mass(self):
        return capsule_mass(self.radius, self.half_length, self.density)

    @property
    def inertia(self):
        return capsule_inertia(self.radius, self.half_length, self.density, self.capsule_axis)

    @property
    def segment(self):
        return capsule_segment(self.capsule_center, self.capsule_axis, self.half_length)


@dataclass(frozen=True, eq=False)
class HumanoidModel:
    """Immutable kinematic tree of capsule bodies in topological order."""

    name: str
    bodies: tuple
    roles: dict = field(default_factory=dict)
    collision_pairs: tuple = ()
    format_version: str = "1.0"

    @cached_property
    def num_bodies(self):
        return len(self.bodies)

    @cached_property
    def parents(self):
        return np.array([b.parent for b in self.bodies], dtype=int)

    @cached_property
    def offsets(self):
        return np.array([b.offset for b in self.bodies], dtype=float)

    @cached_property
    def masses(self):
        return np.array([b.mass for b in self.bodies])

    @cached_property
    def total_mass(self):
        return float(self.masses.sum())

    @cached_property
    def inertias(self):
        """Inertia tensors about each body's center of mass, in body coordinates."""
        return np.stack([b.inertia for b in self.bodies])

    @cached_property
    def coms(self):
        return np.array([b.capsule_center for b in self.bodies], dtype=float)

    @cached_property
    def radii(self):
        return np.array([b.radius for b in self.bodies])

    @cached_property
    def segments(self):
        return np.stack([b.segment for b in self.bodies])

    @cached_property
    def joint_slot(self):
        """Index of each body's Euler triplet in joint_angles.reshape(-1, 3), or -1."""
        slots, count = [], 0
        for body in self.bodies:
            if body.joint is JointType.BALL:
                slots.append(count)
                count += 1
            else:
                slots.append(-1)
        return np.array(slots, dtype=int)

    @cached_property
    def ball_bodies(self):
        return np.flatnonzero(self.joint_slot >= 0)

    @cached_property
    def articulated(self):
        """Bodies that own a joint (the root plus every ball joint)."""
        return np.array([0] + list(self.ball_bodies), dtype=int)

    @cached_property
    def num_angles(self):
        return 3 * len(self.ball_bodies)

    @property
    def nq(self):
        return 7 + self.num_angles

    @property
    def nv(self):
        return 6 + self.num_angles

    @cached_property
    def kp(self):
        return np.concatenate([b.kp for b in self.bodies if b.joint is JointType.BALL] or [np.zeros(0)])

    @cached_property
    def kd(self):
        return np.concatenate([b.kd for b in self.bodies if b.joint is JointType.BALL] or [np.zeros(0)])

    @cached_property
    def joint_limits(self):
        """(num_angles, 2) lower/upper bounds; ±inf where a joint declares none."""
        rows = []
        for body in self.bodies:
            if body.joint is not JointType.BALL:
                continue
            if body.joint_limits:
                rows.extend(body.joint_limits)
            else:
                rows.extend([(-np.inf, np.inf)] * 3)
        return np.array(rows, dtype=float).reshape(-1, 2)

    @cached_property
    def children(self):
        kids = [[] for _ in self.bodies]
        for k, body in enumerate(self.bodies[1:], start=1):
            kids[body.parent].append(k)
        return kids

    @cached_property
    def depth(self):
        depth = np.zeros(self.num_bodies, dtype=int)
        for k in range(1, self.num_bodies):
            depth[k] = depth[self.parents[k]] + 1
        return depth

    @cached_property
    def levels(self):
        """Body indices grouped by tree depth, root level first."""
        return [np.flatnonzero(self.depth == d) for d in range(int(self.depth.max()) + 1)]

    @cached_property
    def ancestors(self):
        """ancestors[k]: path from the root to k, inclusive."""
        paths = []
        for k in range(self.num_bodies):
            path = [k]
            while path[-1] != 0:
                path.append(int(self.parents[path[-1]]))
            paths.append(path[::-1])
        return paths

    @cached_property
    def subtree(self):
        """subtree[k]: boolean mask of k and all its descendants."""
        mask = np.zeros((self.num_bodies, self.num_bodies), dtype=bool)
        for k, path in enumerate(self.ancestors):
            mask[path, k] = True
        return mask

    @cached_property
    def names(self):
        return [b.name for b in self.bodies]

    def body_index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"model {self.name!r} has no body named {name!r}", key=name) from None

    def role(self, role):
        """Body index (or list of indices) registered for a role such as 'head' or 'feet'."""
        if role not in self.roles:
            raise ConfigError(f"model {self.name!r} defines no {role!r} role", key=role)
        value = self.roles[role]
        if isinstance(value, (list, tuple)):
            return [self.body_index(v) for v in value]
        return self.body_index(value)

    def velocity_index(self, body):
        """Start index of a ball body's three rates in the generalized velocity."""
        return 6 + 3 * int(self.joint_slot[body])


@dataclass(frozen=True, eq=False)
class SceneObject:
    name: str
    obj_class: ObjectClass
    shape: str
    position: np.ndarray
    rotation: Quat = field(default_factory=Quat.identity)
    mobility: Mobility = Mobility.STATIC
    mass: float = 0.0
    half_extents: tuple = ()
    radius: float = 0.0
    half_length: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.shape == "box":
            if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
                raise DomainError(f"object {self.name!r}: box extents must be three positive values")
        elif self.shape == "capsule":
            if self.radius <= 0 or self.half_length < 0:
                raise DomainError(f"object {self.name!r}: capsule needs radius > 0 and half_length >= 0")
        else:
            raise DomainError(f"object {self.name!r}: unknown shape {self.shape!r}")
        if self.mobility is Mobility.FREE and self.mass <= 0:
            raise DomainError(f"object {self.name!r}: free objects need a positive mass")

    @property
    def is_free(self):
        return self.mobility is Mobility.FREE

    @property
    def inertia(self):
        if self.shape == "box":
            return box_inertia(self.mass, self.half_extents)
        density = self.mass / max(capsule_mass(self.radius, self.half_length, 1.0), 1e-12)
        return capsule_inertia(self.radius, self.half_length, density)

    @property
    def top_height(self):
        """World z of the highest point, assuming the object sits upright."""
        if self.shape == "box":
            return float(self.position[2] + self.half_extents[2])
        return float(self.position[2] + self.half_length + self.radius)


@dataclass(frozen=True, eq=False)
class Scene:
    name: str
    objects: tuple = ()
    format_version: str = "1.0"

    @property
    def primary(self):
        """The object of interest fed to the kinematic policy, if any."""
        return self.objects[0] if self.objects else None

    def index(self, name):
        for i, obj in enumerate(self.objects):
            if obj.name == name:
                return i
        raise ConfigError(f"scene {self.name!r} has no object named {name!r}", key=name)
