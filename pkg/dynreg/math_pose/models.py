from dataclasses import dataclass

import numpy as np

from dynreg.exceptions import DomainError, InvalidRotationError, ShapeError

TRANSFORM_TOL = 1e-8


def canonicalize(q):
    """Normalize wxyz quaternion(s) along the last axis and flip to w >= 0."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ShapeError(f"quaternion must have 4 components, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidRotationError("quaternion has non-finite components")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise InvalidRotationError("zero-norm quaternion")
    # already-unit inputs keep their exact bits
    norm = np.where(np.abs(norm - 1.0) < 1e-15, 1.0, norm)
    q = q / norm
    return np.where(q[..., :1] < 0.0, -q, q)


def _vector(value, length, name):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (length,):
        raise ShapeError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class Quat:
    """Unit quaternion stored as (w, x, y, z) with w >= 0."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        w, x, y, z = canonicalize([self.w, self.x, self.y, self.z])
        object.__setattr__(self, "w", float(w))
        object.__setattr__(self, "x", float(x))
        object.__setattr__(self, "y", float(y))
        object.__setattr__(self, "z", float(z))

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, wxyz):
        w, x, y, z = np.asarray(wxyz, dtype=float).reshape(4)
        return cls(w, x, y, z)

    @property
    def array(self):
        return np.array([self.w, self.x, self.y, self.z])

    def inverse(self):
        return Quat(self.w, -self.x, -self.y, -self.z)


@dataclass(frozen=True, eq=False)
class Transform4:
    """Homogeneous 4x4 rigid transform."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ShapeError(f"transform must be 4x4, got {m.shape}")
        rot = m[:3, :3]
        if np.linalg.norm(rot.T @ rot - np.eye(3)) >= TRANSFORM_TOL:
            raise InvalidRotationError("rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) >= TRANSFORM_TOL:
            raise InvalidRotationError("rotation block is not a proper rotation")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=0.0):
            raise InvalidRotationError("last row must be [0, 0, 0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_rotation_translation(cls, rotation, translation):
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @property
    def rotation(self):
        return self.matrix[:3, :3]

    @property
    def translation(self):
        return self.matrix[:3, 3]

    def inverse(self):
        rot_t = self.rotation.T
        return Transform4.from_rotation_translation(rot_t, -rot_t @ self.translation)

    def __matmul__(self, other):
        return Transform4(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class Pose:
    """Generalized coordinates of the humanoid at one frame."""

    root_pos: np.ndarray
    root_rot: Quat
    joint_angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "root_pos", _vector(self.root_pos, 3, "root_pos"))
        if not isinstance(self.root_rot, Quat):
            object.__setattr__(self, "root_rot", Quat.from_array(self.root_rot))
        angles = np.array(self.joint_angles, dtype=float).reshape(-1)
        if angles.size % 3:
            raise ShapeError(f"joint_angles length {angles.size} is not a multiple of 3")
        object.__setattr__(self, "joint_angles", _vector(angles, angles.size, "joint_angles"))

    @property
    def num_coordinates(self):
        return 7 + self.joint_angles.size

    def as_vector(self):
        return np.concatenate([self.root_pos, self.root_rot.array, self.joint_angles])

    @classmethod
    def from_vector(cls, vector):
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size < 7:
            raise ShapeError(f"pose vector needs at least 7 entries, got {vector.size}")
        return cls(vector[:3], Quat.from_array(vector[3:7]), vector[7:])

    @classmethod
    def identity(cls, num_angles, root_pos=(0.0, 0.0, 0.0)):
        return cls(np.asarray(root_pos, dtype=float), Quat.identity(), np.zeros(num_angles))

    def replace(self, root_pos=None, root_rot=None, joint_angles=None):
        return Pose(
            self.root_pos if root_pos is None else root_pos,
            self.root_rot if root_rot is None else root_rot,
            self.joint_angles if joint_angles is None else joint_angles,
        )


@dataclass(frozen=True, eq=False)
class QVel:
    """Generalized velocity: world root linear/angular velocity plus Euler-angle rates."""

    root_lin_vel: np.ndarray
    root_ang_vel: np.ndarray
    joint_vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "root_lin_vel", _vector(self.root_lin_vel, 3, "root_lin_vel"))
        object.__setattr__(self, "root_ang_vel", _vector(self.root_ang_vel, 3, "root_ang_vel"))
        joint_vel = np.array(self.joint_vel, dtype=float).reshape(-1)
        object.__setattr__(self, "joint_vel", _vector(joint_vel, joint_vel.size, "joint_vel"))

    @property
    def num_velocities(self):
        return 6 + self.joint_vel.size

    def as_vector(self):
        return np.concatenate([self.root_lin_vel, self.root_ang_vel, self.joint_vel])

    @classmethod
    def from_vector(cls, vector):
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size < 6:
            raise ShapeError(f"velocity vector needs at least 6 entries, got {vector.size}")
        return cls(vector[:3], vector[3:6], vector[6:])

    @classmethod
    def zeros(cls, num_angles):
        return cls(np.zeros(3), np.zeros(3), np.zeros(num_angles))
