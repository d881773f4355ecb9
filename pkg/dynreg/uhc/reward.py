import numpy as np
from django.conf import settings

from math_pose.kinematics import forward_kinematics
from math_pose.rotations import quat_diff_array, rotation_angle


def weighted_reward(squared_errors, weights, exponents):
    """Σ w_k exp(−c_k e_k) over the terms of `weights`; returns (reward, {term: exp value})."""
    terms = {name: float(np.exp(-exponents[name] * squared_errors[name])) for name in weights}
    return float(sum(weights[name] * terms[name] for name in weights)), terms


def _as_vector(value):
    return value.as_vector() if hasattr(value, "as_vector") else np.asarray(value, dtype=float)


def pose_errors(model, q, q_hat):
    """Squared joint-rotation and joint-position errors over every articulated body, root included."""
    frames, target = forward_kinematics(model, q), forward_kinematics(model, q_hat)
    bodies = model.articulated
    angles = rotation_angle(quat_diff_array(frames.quats[bodies], target.quats[bodies]))
    positions = frames.positions[bodies] - target.positions[bodies]
    return float(np.sum(angles**2)), float(np.sum(positions**2))


def uhc_reward(model, q, q_hat, jrot_vel, jrot_vel_hat, eta, weights=None, exponents=None):
    """Imitation reward in (0, 1]: world-frame joint rotation, position and velocity terms plus the η penalty.

    jrot_vel and jrot_vel_hat are generalized velocities (QVel or vectors); eta is
    the residual wrench in action units.
    """
    weights = weights or settings.UHC_REWARD_WEIGHTS
    exponents = exponents or settings.UHC_REWARD_EXPONENTS
    jr, jp = pose_errors(model, q, q_hat)
    velocity, velocity_hat = _as_vector(jrot_vel), _as_vector(jrot_vel_hat)
    errors = {
        "jr": jr,
        "jp": jp,
        "jv": float(np.sum((velocity - velocity_hat) ** 2)),
        "res": float(np.sum(np.asarray(eta, dtype=float) ** 2)),
    }
    return weighted_reward(errors, weights, exponents)
