"""Agent-centric controller features.

Blocks, in order (A = joint angles, J = articulated bodies; default25 gives 640):
  root orientation in the agent frame                      4
  simulated pose: root height, agent root quat, angles     5 + A
  target pose: root height, agent root quat, angles        5 + A
  pose difference q − q̂ (agent-frame root offset,
      agent root quat difference, angle difference)        7 + A
  velocity: agent-frame root linear/angular, joint rates   6 + A
  heading difference ψ − ψ̂                                 1
  target joint positions in the agent frame                3J
  joint position difference j − ĵ                         3J
  target joint orientations in the agent frame             4J
  joint rotation difference j ∘ ĵ⁻¹                        4J

The agent frame is the simulated root's heading with its horizontal position
removed.
"""

import numpy as np

from dynreg.exceptions import ShapeError
from math_pose.frames import AgentFrame
from math_pose.kinematics import check_pose, forward_kinematics
from math_pose.rotations import quat_conjugate, quat_multiply, wrap_angle


def block_sizes(model):
    angles, bodies = model.num_angles, len(model.articulated)
    return {
        "root_orientation": 4,
        "pose": 5 + angles,
        "target_pose": 5 + angles,
        "pose_difference": 7 + angles,
        "velocity": 6 + angles,
        "heading_difference": 1,
        "target_joint_positions": 3 * bodies,
        "joint_position_difference": 3 * bodies,
        "target_joint_rotations": 4 * bodies,
        "joint_rotation_difference": 4 * bodies,
    }


def feature_size(model):
    return sum(block_sizes(model).values())


def split_features(model, features):
    """{block name: slice of the feature vector}."""
    features = np.asarray(features, dtype=float)
    out, start = {}, 0
    for name, size in block_sizes(model).items():
        out[name] = features[..., start:start + size]
        start += size
    return out


def _joint_frames(model, pose):
    frames = forward_kinematics(model, pose)
    return frames.positions[model.articulated], frames.quats[model.articulated]


def uhc_features(model, q, qdot, q_hat_next):
    check_pose(model, q)
    check_pose(model, q_hat_next)
    if qdot.joint_vel.size != model.num_angles:
        raise ShapeError(f"velocity has {qdot.joint_vel.size} joint rates, model expects {model.num_angles}")

    frame = AgentFrame.of(q)
    root_rot = frame.quat(q.root_rot)
    target_rot = frame.quat(q_hat_next.root_rot)

    positions, rotations = _joint_frames(model, q)
    target_positions, target_rotations = _joint_frames(model, q_hat_next)
    agent_rotations = frame.quat(rotations)
    agent_target_rotations = frame.quat(target_rotations)

    heading_difference = wrap_angle(frame.heading_of(q.root_rot) - frame.heading_of(q_hat_next.root_rot))

    return np.concatenate(
        [
            root_rot,
            [q.root_pos[2]],
            root_rot,
            q.joint_angles,
            [q_hat_next.root_pos[2]],
            target_rot,
            q_hat_next.joint_angles,
            frame.vector(q.root_pos - q_hat_next.root_pos),
            root_rot - target_rot,
            q.joint_angles - q_hat_next.joint_angles,
            frame.vector(qdot.root_lin_vel),
            frame.vector(qdot.root_ang_vel),
            qdot.joint_vel,
            [heading_difference],
            frame.point(target_positions).reshape(-1),
            frame.vector(positions - target_positions).reshape(-1),
            agent_target_rotations.reshape(-1),
            quat_multiply(agent_rotations, quat_conjugate(agent_target_rotations)).reshape(-1),
        ]
    )
