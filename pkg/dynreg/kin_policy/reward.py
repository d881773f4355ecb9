import numpy as np
from django.conf import settings

from math_pose.rotations import quat_diff_array, rotation_angle
from metrics_eval.errors import camera_row, camera_transform
from uhc.reward import pose_errors, weighted_reward


def kin_reward(model, sim_pose, sim_qvel, gt_pose, gt_qvel, kin_target, cam_gt, weights=None, exponents=None,
               mount_offset=settings.CAMERA_MOUNT_OFFSET, mount_rotation=settings.CAMERA_MOUNT_ROTATION):
    """Reward of one dynamics-regulated step, in (0, 1].

    Camera terms compare the simulated head camera with the ground-truth camera
    row; gt_* terms compare the simulation with the ground truth; dyna_* terms
    compare it with the kinematic target the controller was asked to reach.
    Returns (reward, {term: exp value}).
    """
    weights = weights or settings.KIN_REWARD_WEIGHTS
    exponents = exponents or settings.KIN_REWARD_EXPONENTS
    camera = camera_row(camera_transform(model, sim_pose, mount_offset, mount_rotation))
    cam_gt = np.asarray(cam_gt, dtype=float)
    gt_jr, _ = pose_errors(model, sim_pose, gt_pose)
    dyna_jr, dyna_jp = pose_errors(model, sim_pose, kin_target)
    errors = {
        "hp": float(np.sum((camera[:3] - cam_gt[:3]) ** 2)),
        "hq": float(rotation_angle(quat_diff_array(camera[3:], cam_gt[3:])) ** 2),
        "gt_jv": float(np.sum((sim_qvel.joint_vel - gt_qvel.joint_vel) ** 2)),
        "gt_jr": gt_jr,
        "dyna_jr": dyna_jr,
        "dyna_jp": dyna_jp,
    }
    return weighted_reward(errors, weights, exponents)
