"""Supervised pose loss of the kinematic policy.

Per predicted frame, six squared terms against the ground truth:
  root_rot    ‖log(r̃ ∘ r̂⁻¹)‖²
  root_pos    ‖r̃ − r̂‖²
  object_rot  wrap(ψ̃ − ψ̂)², the heading error as seen from the object
  object_pos  ‖Rz(−ψ̃)(o − r̃) − Rz(−ψ̂)(o − r̂)‖²
  joint_rot   Σ ‖log(R(θ̃_j) R(θ̂_j)ᵀ)‖² over local joint rotations
  joint_pos   Σ ‖(j̃_k − r̃) − (ĵ_k − r̂)‖² over articulated bodies, root-relative
The object terms vanish for clips without an object.
"""

import numpy as np
from scipy.spatial.transform import Rotation as sRot

from dynreg.exceptions import ShapeError
from math_pose.kinematics import forward_kinematics, local_euler_axes
from math_pose.rotations import euler_to_matrix, heading_angle, heading_gradient, log_map, quat_diff, wrap_angle, yaw_matrix

from .context import pose_in_frame, step_input, step_input_backward
from .integration import finite_integrate, finite_integrate_backward, finite_integrate_pose_backward

TERMS = ("root_rot", "root_pos", "object_rot", "object_pos", "joint_rot", "joint_pos")
Z_AXIS = np.array([0.0, 0.0, 1.0])


def _joint_position_grads(model, frames, grad_points):
    """(∂/∂δ root rotation, ∂/∂angles) of Σ g_k · j_k for root-relative joint positions j_k."""
    positions = frames.positions
    force = np.zeros((model.num_bodies, 3))
    torque = np.zeros((model.num_bodies, 3))
    force[model.articulated] = grad_points
    torque[model.articulated] = np.cross(positions[model.articulated], grad_points)
    for k in reversed(range(1, model.num_bodies)):
        parent = model.parents[k]
        force[parent] += force[k]
        torque[parent] += torque[k]
    moment = torque - np.cross(positions, force)

    grad_angles = np.zeros(model.num_angles)
    for body in range(1, model.num_bodies):
        slot = model.joint_slot[body]
        if slot >= 0:
            grad_angles[3 * slot:3 * slot + 3] = frames.axes[body].T @ moment[body]
    return moment[0], grad_angles


def pose_loss(model, pred, gt, object_position=None):
    """(loss, {term: value}, ∂/∂root_pos, ∂/∂δ root rotation, ∂/∂angles) of one predicted pose."""
    if pred.joint_angles.size != gt.joint_angles.size:
        raise ShapeError("predicted and ground-truth poses differ in joint count")
    terms = dict.fromkeys(TERMS, 0.0)
    grad_pos, grad_rot = np.zeros(3), np.zeros(3)
    grad_angles = np.zeros(model.num_angles)

    rot_error = log_map(quat_diff(pred.root_rot, gt.root_rot))
    terms["root_rot"] = float(rot_error @ rot_error)
    grad_rot += 2.0 * rot_error

    pos_error = pred.root_pos - gt.root_pos
    terms["root_pos"] = float(pos_error @ pos_error)
    grad_pos += 2.0 * pos_error

    if object_position is not None:
        psi, psi_gt = heading_angle(pred.root_rot), heading_angle(gt.root_rot)
        dpsi = heading_gradient(pred.root_rot)
        heading_error = float(wrap_angle(psi - psi_gt))
        terms["object_rot"] = heading_error**2
        grad_rot += 2.0 * heading_error * dpsi

        seen = yaw_matrix(-psi) @ (object_position - pred.root_pos)
        seen_gt = yaw_matrix(-psi_gt) @ (object_position - gt.root_pos)
        diff = seen - seen_gt
        terms["object_pos"] = float(diff @ diff)
        grad_pos += -2.0 * yaw_matrix(psi) @ diff
        grad_rot += 2.0 * float(diff @ -np.cross(Z_AXIS, seen)) * dpsi

    angles, angles_gt = pred.joint_angles.reshape(-1, 3), gt.joint_angles.reshape(-1, 3)
    if angles.size:
        relative = euler_to_matrix(angles) @ np.transpose(euler_to_matrix(angles_gt), (0, 2, 1))
        joint_errors = sRot.from_matrix(relative).as_rotvec()
        terms["joint_rot"] = float(np.sum(joint_errors**2))
        axes = local_euler_axes(angles)
        grad_angles += 2.0 * np.einsum("jac,ja->jc", axes, joint_errors).reshape(-1)

    frames, frames_gt = forward_kinematics(model, pred), forward_kinematics(model, gt)
    joints = frames.positions[model.articulated] - pred.root_pos
    joints_gt = frames_gt.positions[model.articulated] - gt.root_pos
    joint_diff = joints - joints_gt
    terms["joint_pos"] = float(np.sum(joint_diff**2))
    root_grad, angle_grad = _joint_position_grads(model, frames, 2.0 * joint_diff)
    grad_rot += root_grad
    grad_angles += angle_grad

    return float(sum(terms.values())), terms, grad_pos, grad_rot, grad_angles


def _check_lengths(episode):
    if len(episode.inputs) != len(episode.targets) or len(episode.previous) != len(episode.targets):
        raise ShapeError(
            f"episode {episode.clip!r}: {len(episode.inputs)} inputs, {len(episode.previous)} poses, "
            f"{len(episode.targets)} targets"
        )


def _add_grads(total, grads):
    for name, value in grads.items():
        total[name] = total[name] + value if name in total else value


def rollout_loss(model, policy, params, context, start, targets, object_positions=None, hidden=None):
    """Summed pose loss of a mean-action rollout from `start` that feeds its own predictions back.

    The gradient is exact: besides finite integration, the step MLP and the
    GRU it also flows through every fed-back pose into the next step input
    and the next integration. Returns (loss, gradient, {term: summed value}).
    """
    if len(targets) > context.num_frames - 1:
        raise ShapeError(f"{len(targets)} targets for a context of {context.num_frames} frames")
    hidden = policy.initial_hidden() if hidden is None else hidden
    pose = start
    totals = dict.fromkeys(TERMS, 0.0)
    loss = 0.0
    steps = []
    for t, target in enumerate(targets):
        mean, hidden, cache = policy.step_forward(params, hidden, step_input(context, t, pose))
        predicted = finite_integrate(mean, pose)
        obj = None if object_positions is None else object_positions[t]
        value, terms, *grads = pose_loss(model, predicted, target, obj)
        loss += value
        for name in TERMS:
            totals[name] += terms[name]
        steps.append((pose, mean, cache, grads))
        pose = predicted

    total = {}
    grad_hidden = np.zeros(policy.hidden)
    grad_next = [np.zeros(3), np.zeros(3), np.zeros(model.num_angles)]
    for t in reversed(range(len(steps))):
        pose, mean, cache, grads = steps[t]
        grad_pose = [a + b for a, b in zip(grads, grad_next)]
        grad_mean = finite_integrate_backward(mean, pose, *grad_pose)
        step_grads, grad_hidden, grad_x = policy.step_backward(cache, grad_mean, grad_hidden)
        _add_grads(total, step_grads)
        through_integration = finite_integrate_pose_backward(mean, pose, *grad_pose)
        through_input = step_input_backward(context, t, pose, grad_x)
        grad_next = [a + b for a, b in zip(through_integration, through_input)]
    return loss, params.pack(total), totals


def supervised_loss(model, policy, params, episode):
    """Summed pose loss over an episode and its flat parameter gradient.

    Self-fed episodes are re-run through rollout_loss. Otherwise the recorded
    inputs and previous poses are held fixed and the gradient flows through
    finite integration, the step MLP and back through the GRU.
    Returns (loss, gradient, {term: summed value}).
    """
    _check_lengths(episode)
    if episode.self_fed:
        return rollout_loss(
            model, policy, params, episode.context, episode.start, episode.targets, episode.object_positions,
            episode.hidden,
        )
    hidden = episode.hidden if episode.hidden is not None else policy.initial_hidden()
    means, cache = policy.sequence(params, hidden, episode.inputs)
    grad_means = np.zeros_like(means)
    totals = dict.fromkeys(TERMS, 0.0)
    loss = 0.0
    for t, (mean, previous, target) in enumerate(zip(means, episode.previous, episode.targets)):
        obj = None if episode.object_positions is None else episode.object_positions[t]
        value, terms, grad_pos, grad_rot, grad_angles = pose_loss(model, finite_integrate(mean, previous), target, obj)
        loss += value
        for name in TERMS:
            totals[name] += terms[name]
        grad_means[t] = finite_integrate_backward(mean, previous, grad_pos, grad_rot, grad_angles)
    return loss, policy.sequence_backward(cache, grad_means), totals


def init_loss(network, params, inputs, frame, gt_pose):
    """Squared error of the raw initialization output against the first pose expressed in `frame`."""
    out, cache = network.forward(params, inputs)
    position, rotation = pose_in_frame(frame, gt_pose)
    if out[3:7] @ rotation < 0:
        rotation = -rotation
    diff = np.concatenate([out[:3] - position, out[3:7] - rotation, out[7:] - gt_pose.joint_angles])
    return float(diff @ diff), network.backward(cache, 2.0 * diff)
