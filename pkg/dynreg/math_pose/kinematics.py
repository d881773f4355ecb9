from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as sRot

from dynreg.exceptions import InsufficientDataError, ShapeError

from .models import Pose, QVel, Transform4
from .rotations import euler_to_matrix, matrix_to_quat, quat_to_matrix


@dataclass(frozen=True, eq=False)
class BodyFrames:
    """World frames of every body for one pose.

    axes[k] holds, as columns, the world directions of the three Euler axes of
    body k's joint (all pass through positions[k]); zero for root and fixed bodies.
    """

    positions: np.ndarray
    rotations: np.ndarray
    axes: np.ndarray

    @property
    def quats(self):
        return matrix_to_quat(self.rotations)


def check_pose(model, pose):
    if pose.joint_angles.size != model.num_angles:
        raise ShapeError(
            f"pose has {pose.joint_angles.size} joint angles, model {model.name!r} "
            f"expects {model.num_angles} ({model.nq} coordinates)"
        )


def local_euler_axes(angles):
    """Euler axes of intrinsic XYZ joints expressed in the parent frame, shape (n, 3, 3)."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 3)
    ca, sa = np.cos(angles[:, 0]), np.sin(angles[:, 0])
    cb, sb = np.cos(angles[:, 1]), np.sin(angles[:, 1])
    axes = np.zeros((angles.shape[0], 3, 3))
    axes[:, 0, 0] = 1.0
    axes[:, 1, 1] = ca
    axes[:, 2, 1] = sa
    axes[:, 0, 2] = sb
    axes[:, 1, 2] = -sa * cb
    axes[:, 2, 2] = ca * cb
    return axes


def forward_kinematics(model, pose):
    """World position and orientation of every body frame.

    child world transform = parent world transform ∘ local offset ∘ joint rotation
    """
    check_pose(model, pose)
    num_bodies = model.num_bodies
    positions = np.zeros((num_bodies, 3))
    rotations = np.zeros((num_bodies, 3, 3))
    axes = np.zeros((num_bodies, 3, 3))

    angles = pose.joint_angles.reshape(-1, 3)
    local_rot = euler_to_matrix(angles)
    local_axes = local_euler_axes(angles)

    positions[0] = pose.root_pos
    rotations[0] = quat_to_matrix(pose.root_rot)
    for k in range(1, num_bodies):
        parent = model.parents[k]
        parent_rot = rotations[parent]
        positions[k] = positions[parent] + parent_rot @ model.offsets[k]
        joint = model.joint_slot[k]
        if joint < 0:
            rotations[k] = parent_rot
        else:
            rotations[k] = parent_rot @ local_rot[joint]
            axes[k] = parent_rot @ local_axes[joint]
    return BodyFrames(positions, rotations, axes)


def joint_positions(model, pose):
    """World positions of the articulated bodies (root + ball joints)."""
    return forward_kinematics(model, pose).positions[model.articulated]


def finite_difference_velocity(poses, dt):
    """Generalized velocities by forward differences; the last frame repeats."""
    if len(poses) < 2:
        raise InsufficientDataError("finite differences need at least two frames")
    if dt <= 0:
        raise ShapeError(f"dt must be positive, got {dt}")
    pos = np.stack([p.root_pos for p in poses])
    rot = sRot.from_quat(np.stack([p.root_rot.array for p in poses]), scalar_first=True)
    angles = np.stack([p.joint_angles for p in poses])

    lin = np.diff(pos, axis=0) / dt
    ang = (rot[1:] * rot[:-1].inv()).as_rotvec() / dt
    joint = np.diff(angles, axis=0) / dt

    velocities = [QVel(lin[t], ang[t], joint[t]) for t in range(len(poses) - 1)]
    velocities.append(velocities[-1])
    return velocities


def root_transform_matrix(pose):
    return Transform4.from_rotation_translation(quat_to_matrix(pose.root_rot), pose.root_pos)


def stack_poses(poses):
    return np.stack([p.as_vector() for p in poses])


def unstack_poses(array):
    return [Pose.from_vector(row) for row in np.asarray(array, dtype=float)]
