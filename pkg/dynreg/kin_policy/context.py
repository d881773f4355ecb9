"""Agent-centric inputs of the kinematic policy.

Every quantity is expressed in the frame of the current pose with its heading
and its full root position removed. The initialization module has no pose yet
and uses the first camera frame instead.
"""

import numpy as np

from dynreg.exceptions import InsufficientDataError
from math_pose.frames import AgentFrame
from math_pose.models import Pose, Quat
from math_pose.rotations import heading_angle, heading_gradient, quat_multiply, yaw_matrix, yaw_quat

from .models import CAMERA_SLOT, OBJECT_SLOT, KinStepInput, object_one_hot

Z_AXIS = np.array([0.0, 0.0, 1.0])
HALF_NEG_Z = np.array([0.0, 0.0, 0.0, -0.5])


def object_slot(frame, object_class, position, rotation):
    """One-hot class, agent-frame position and orientation; zero slots for class none."""
    one_hot = object_one_hot(object_class)
    if one_hot[-1]:
        return np.concatenate([one_hot, np.zeros(OBJECT_SLOT - one_hot.size)])
    return np.concatenate([one_hot, frame.point(position), frame.quat(rotation)])


def camera_slot(frame, camera_row):
    camera_row = np.asarray(camera_row, dtype=float)
    return np.concatenate([frame.point(camera_row[:3]), frame.quat(camera_row[3:])])


def kin_input_transform(q_t, phi_next, obj_next, cam_next):
    """KinStepInput of pose q_t toward the next frame.

    obj_next is (object class, position, wxyz rotation); cam_next a position +
    wxyz camera row.
    """
    frame = AgentFrame.of(q_t, keep_height=False)
    object_class, position, rotation = obj_next
    return KinStepInput(
        root_rot=frame.quat(q_t.root_rot),
        joint_angles=q_t.joint_angles.copy(),
        phi=np.asarray(phi_next, dtype=float).reshape(-1),
        object_state=object_slot(frame, object_class, position, rotation),
        camera=camera_slot(frame, cam_next),
    )


def step_input(context, t, q_t):
    """Input vector for step t, read from frame t + 1 of the context."""
    if not 0 <= t + 1 < context.num_frames:
        raise InsufficientDataError(f"context of {context.num_frames} frames has no frame {t + 1}")
    step = t + 1
    obj = (context.object_class, context.object_positions[step], context.object_rotations[step])
    return kin_input_transform(q_t, context.phi[step], obj, context.camera[step]).as_vector()


def _left_matrix(q):
    """4x4 matrix of q ⊗ · on wxyz quaternions."""
    w, x, y, z = q
    return np.array([[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]])


def _right_matrix(q):
    """4x4 matrix of · ⊗ q on wxyz quaternions."""
    w, x, y, z = q
    return np.array([[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]])


def _frame_quat_backward(heading, rotation, grad_slot):
    """(∂/∂ψ, ∂/∂δ) of grad_slot · canonical(yaw_quat(−ψ) ∘ exp(δ) ∘ rotation) at δ = 0."""
    rotation = np.asarray(rotation, dtype=float)
    rotation = rotation / np.linalg.norm(rotation)
    turn = yaw_quat(-heading).array
    raw = _left_matrix(turn) @ rotation
    sign = -1.0 if raw[0] < 0 else 1.0
    d_heading = _right_matrix(rotation) @ (_left_matrix(turn) @ HALF_NEG_Z)
    d_delta = 0.5 * _left_matrix(turn) @ _right_matrix(rotation)[:, 1:]
    return sign * float(grad_slot @ d_heading), sign * (d_delta.T @ grad_slot)


def step_input_backward(context, t, q_t, grad_x):
    """Pull the gradient of step_input(context, t, q_t) back onto q_t.

    Returns (∂/∂root_pos, ∂/∂δ root rotation for exp(δ) ∘ root_rot, ∂/∂angles).
    The pose enters through its own orientation slot, its joint angles and the
    agent frame the object and camera are expressed in.
    """
    grad_x = np.asarray(grad_x, dtype=float)
    frame = AgentFrame.of(q_t, keep_height=False)
    num_angles = q_t.joint_angles.size
    step = t + 1
    grad_heading, grad_rot = _frame_quat_backward(frame.heading, q_t.root_rot.array, grad_x[:4])
    grad_pos = np.zeros(3)

    offset = 4 + num_angles + context.phi.shape[1]
    grad_object = grad_x[offset:offset + OBJECT_SLOT]
    grad_camera = grad_x[offset + OBJECT_SLOT:]
    slots = [(grad_camera, context.camera[step][:3], context.camera[step][3:])]
    if not object_one_hot(context.object_class)[-1]:
        slots.append((grad_object[-7:], context.object_positions[step], context.object_rotations[step]))
    for grad_slot, position, rotation in slots:
        grad_point = grad_slot[:3]
        grad_pos -= frame.matrix.T @ grad_point
        grad_heading -= float(grad_point @ np.cross(Z_AXIS, frame.point(position)))
        grad_heading += _frame_quat_backward(frame.heading, rotation, grad_slot[3:])[0]

    grad_rot = grad_rot + grad_heading * heading_gradient(q_t.root_rot)
    return grad_pos, grad_rot, grad_x[4:4 + num_angles].copy()


def camera_frame(camera_row):
    """Frame at a camera row with the camera's heading removed."""
    camera_row = np.asarray(camera_row, dtype=float)
    return AgentFrame(float(heading_angle(camera_row[3:])), camera_row[:3].copy())


def init_inputs(context):
    """(T, D + 18) per-frame inputs of the initialization module, in the first camera frame."""
    frame = camera_frame(context.camera[0])
    rows = [
        np.concatenate([
            context.phi[t],
            object_slot(frame, context.object_class, context.object_positions[t], context.object_rotations[t]),
            camera_slot(frame, context.camera[t]),
        ])
        for t in range(context.num_frames)
    ]
    return np.stack(rows), frame


def init_input_size(phi_dim):
    return phi_dim + OBJECT_SLOT + CAMERA_SLOT


def pose_in_frame(frame, pose):
    """(root position, root quaternion) of a world pose inside `frame`."""
    return frame.point(pose.root_pos), frame.quat(pose.root_rot)


def pose_from_frame(frame, position, rotation, joint_angles):
    """World Pose from a root position and orientation given inside `frame`."""
    rotation = np.asarray(rotation, dtype=float)
    rotation = rotation / np.linalg.norm(rotation)
    world_rot = quat_multiply(yaw_quat(frame.heading).array, rotation)
    return Pose(
        frame.origin + yaw_matrix(frame.heading) @ np.asarray(position, dtype=float),
        Quat.from_array(world_rot),
        joint_angles,
    )
