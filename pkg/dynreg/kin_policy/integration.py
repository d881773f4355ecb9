"""Finite integration of a step output into the next pose.

The output's root velocities live in the heading frame of the current pose:
  root_pos' = root_pos + Rz(ψ) v δt
  root_rot' = exp(Rz(ψ) ω δt) ∘ root_rot
  angles'   = predicted angles
"""

import numpy as np
from django.conf import settings

from math_pose.models import Pose, Quat
from math_pose.rotations import (
    exp_map,
    heading_angle,
    heading_gradient,
    log_map,
    quat_diff,
    quat_multiply,
    quat_to_matrix,
    so3_left_jacobian,
    yaw_matrix,
)

from .models import KinStepOutput

DT = 1.0 / settings.MOTION_FPS
Z_AXIS = np.array([0.0, 0.0, 1.0])


def _output(output, num_angles):
    if isinstance(output, KinStepOutput):
        return output
    return KinStepOutput.from_vector(output, num_angles)


def finite_integrate(output, q_t, dt=DT):
    output = _output(output, q_t.joint_angles.size)
    heading = yaw_matrix(heading_angle(q_t.root_rot))
    rotation = exp_map(heading @ output.ang_vel * dt)
    root_rot = quat_multiply(rotation.array, q_t.root_rot.array)
    return Pose(
        q_t.root_pos + heading @ output.lin_vel * dt,
        Quat.from_array(root_rot / np.linalg.norm(root_rot)),
        output.joint_angles,
    )


def finite_integrate_backward(output, q_t, grad_pos, grad_rot, grad_angles, dt=DT):
    """Gradient with respect to the output vector.

    grad_pos is ∂L/∂root_pos', grad_rot ∂L/∂δ for a world-frame perturbation
    exp(δ) ∘ root_rot', grad_angles ∂L/∂angles'.
    """
    output = _output(output, q_t.joint_angles.size)
    heading = yaw_matrix(heading_angle(q_t.root_rot))
    jacobian = so3_left_jacobian(heading @ output.ang_vel * dt)
    return np.concatenate([
        dt * heading.T @ (jacobian.T @ np.asarray(grad_rot, dtype=float)),
        dt * heading.T @ np.asarray(grad_pos, dtype=float),
        np.asarray(grad_angles, dtype=float),
    ])


def finite_integrate_pose_backward(output, q_t, grad_pos, grad_rot, grad_angles, dt=DT):
    """Gradient with respect to the previous pose q_t.

    Same conventions as finite_integrate_backward; returns (∂/∂root_pos,
    ∂/∂δ root rotation, ∂/∂angles). The angles are replaced by the
    prediction, so their gradient is zero.
    """
    output = _output(output, q_t.joint_angles.size)
    heading = yaw_matrix(heading_angle(q_t.root_rot))
    step = heading @ output.ang_vel * dt
    grad_pos = np.asarray(grad_pos, dtype=float)
    grad_rot = np.asarray(grad_rot, dtype=float)
    grad_heading = (
        grad_pos @ np.cross(Z_AXIS, heading @ output.lin_vel * dt)
        + grad_rot @ (so3_left_jacobian(step) @ np.cross(Z_AXIS, step))
    )
    return (
        grad_pos.copy(),
        quat_to_matrix(exp_map(step)).T @ grad_rot + grad_heading * heading_gradient(q_t.root_rot),
        np.zeros_like(np.asarray(grad_angles, dtype=float)),
    )


def output_between(q_t, q_next, dt=DT):
    """The step output that integrates q_t into q_next."""
    heading = yaw_matrix(heading_angle(q_t.root_rot))
    delta = log_map(quat_diff(q_next.root_rot.array, q_t.root_rot.array))
    return KinStepOutput(
        heading.T @ delta / dt,
        heading.T @ (q_next.root_pos - q_t.root_pos) / dt,
        q_next.joint_angles.copy(),
    )
