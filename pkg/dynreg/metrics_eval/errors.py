"""Pose-error metrics.

Positions come in metres and are reported in millimetres.
"""

import numpy as np
from django.conf import settings

from dynreg.exceptions import InsufficientDataError, ShapeError
from humanoid_model.poses import capsule_world_points
from math_pose.kinematics import forward_kinematics
from math_pose.models import Transform4
from math_pose.rotations import matrix_to_quat, quat_to_matrix

MM = 1000.0


def _matrices(transforms):
    if isinstance(transforms, np.ndarray) and transforms.ndim == 3:
        return transforms
    return np.stack([t.matrix if isinstance(t, Transform4) else np.asarray(t, dtype=float) for t in transforms])


def root_error(transforms, transforms_hat):
    """(1/T) Σ ‖I − M_t M̂_t⁻¹‖_F."""
    m, m_hat = _matrices(transforms), _matrices(transforms_hat)
    if m.shape != m_hat.shape:
        raise ShapeError(f"trajectories differ in length: {m.shape[0]} vs {m_hat.shape[0]}")
    if m.shape[0] == 0:
        raise InsufficientDataError("root error of an empty trajectory")
    residual = np.eye(4) - m @ np.linalg.inv(m_hat)
    return float(np.mean(np.linalg.norm(residual, ord="fro", axis=(1, 2))))


def mpjpe(j_pos, j_pos_hat):
    """Root-relative joint error of one frame: (mean mm, per-joint mm). Row 0 is the root."""
    j_pos, j_pos_hat = np.asarray(j_pos, dtype=float), np.asarray(j_pos_hat, dtype=float)
    if j_pos.shape != j_pos_hat.shape or j_pos.ndim != 2 or j_pos.shape[1] != 3:
        raise ShapeError(f"joint sets differ or are not (J, 3): {j_pos.shape} vs {j_pos_hat.shape}")
    per_joint = MM * np.linalg.norm((j_pos - j_pos[0]) - (j_pos_hat - j_pos_hat[0]), axis=1)
    return float(per_joint.mean()), per_joint


def mpjpe_sequence(j_pos_seq, j_pos_hat_seq):
    """Frame-averaged MPJPE (mm) and its per-joint breakdown."""
    j_pos_seq, j_pos_hat_seq = np.asarray(j_pos_seq, dtype=float), np.asarray(j_pos_hat_seq, dtype=float)
    if j_pos_seq.shape != j_pos_hat_seq.shape or j_pos_seq.ndim != 3:
        raise ShapeError(f"joint sequences differ: {j_pos_seq.shape} vs {j_pos_hat_seq.shape}")
    if j_pos_seq.shape[0] == 0:
        raise InsufficientDataError("MPJPE of an empty sequence")
    per_frame = [mpjpe(a, b)[1] for a, b in zip(j_pos_seq, j_pos_hat_seq)]
    per_joint = np.mean(per_frame, axis=0)
    return float(per_joint.mean()), per_joint


def accel_error(j_pos_seq, j_pos_hat_seq):
    """Mean over frames and joints of ‖j̈ − ĵ̈‖ (mm/frame²), with j̈_t = j_{t+2} − 2 j_{t+1} + j_t."""
    a, b = np.asarray(j_pos_seq, dtype=float), np.asarray(j_pos_hat_seq, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"joint sequences differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 3:
        raise InsufficientDataError(f"acceleration error needs at least 3 frames, got {a.shape[0]}")

    def second_difference(x):
        return x[2:] - 2.0 * x[1:-1] + x[:-2]

    return float(MM * np.mean(np.linalg.norm(second_difference(a) - second_difference(b), axis=-1)))


def foot_sliding(foot_pos_seq, height_threshold=settings.FOOT_HEIGHT_THRESHOLD):
    """Mean of d(2 − 2^{h/H}) in mm over consecutive frame pairs and feet.

    A pair counts only when the foot is below H in both frames; h is the higher
    of the two heights and d the horizontal displacement. Other pairs add 0.
    """
    feet = np.asarray(foot_pos_seq, dtype=float)
    if feet.ndim == 2:
        feet = feet[:, None, :]
    if feet.shape[0] < 2:
        return 0.0
    heights = feet[..., 2]
    d = MM * np.linalg.norm(feet[1:, :, :2] - feet[:-1, :, :2], axis=-1)
    h = np.maximum(heights[1:], heights[:-1])
    near = (heights[1:] < height_threshold) & (heights[:-1] < height_threshold)
    contribution = np.where(near, d * (2.0 - np.exp2(np.minimum(h, height_threshold) / height_threshold)), 0.0)
    return float(contribution.mean())


def foot_points(model, pose):
    """Per foot body: capsule core midpoint horizontally, lowest capsule point vertically."""
    feet = model.role("feet")
    feet = feet if isinstance(feet, list) else [feet]
    ends = capsule_world_points(model, forward_kinematics(model, pose))[feet]
    points = ends.mean(axis=1)
    points[:, 2] = ends[:, :, 2].min(axis=1) - model.radii[feet]
    return points


def camera_transform(model, pose, mount_offset=settings.CAMERA_MOUNT_OFFSET,
                     mount_rotation=settings.CAMERA_MOUNT_ROTATION):
    """Head-camera pose: head body frame ∘ mount delta, as a 4x4 matrix."""
    frames = forward_kinematics(model, pose)
    head = model.role("head")
    mount = np.eye(4)
    mount[:3, :3] = quat_to_matrix(mount_rotation)
    mount[:3, 3] = mount_offset
    world = np.eye(4)
    world[:3, :3] = frames.rotations[head]
    world[:3, 3] = frames.positions[head]
    return world @ mount


def camera_row(matrix):
    """Position + wxyz row of a 4x4 camera pose."""
    matrix = np.asarray(matrix, dtype=float)
    return np.concatenate([matrix[:3, 3], matrix_to_quat(matrix[:3, :3])])


def camera_matrices(camera_seq):
    """(T, 4, 4) from rows of position + wxyz quaternion."""
    camera_seq = np.asarray(camera_seq, dtype=float)
    out = np.tile(np.eye(4), (camera_seq.shape[0], 1, 1))
    for t, row in enumerate(camera_seq):
        out[t, :3, :3] = quat_to_matrix(row[3:])
        out[t, :3, 3] = row[:3]
    return out


def camera_error(model, q_seq, cam_gt_seq, mount_offset=settings.CAMERA_MOUNT_OFFSET,
                 mount_rotation=settings.CAMERA_MOUNT_ROTATION):
    """Root-error formula applied to the simulated head camera against the reference camera track."""
    estimated = np.stack([camera_transform(model, q, mount_offset, mount_rotation) for q in q_seq])
    reference = camera_matrices(cam_gt_seq) if np.ndim(cam_gt_seq) == 2 else _matrices(cam_gt_seq)
    return root_error(estimated, reference)
