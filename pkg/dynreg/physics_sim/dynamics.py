"""Reduced-coordinate rigid-body dynamics of the humanoid tree.

Generalized velocity layout: world linear velocity of the root origin (3),
world angular velocity of the root (3), then the Euler-angle rates of every
ball joint. The equations of motion are assembled from per-body Jacobians:

    M(q) q̈ + h(q, q̇) = τ + Σ_k J_kᵀ w_k

with h the velocity-product and gravity terms obtained from one outward pass
with q̈ = 0.
"""

from dataclasses import dataclass

import numpy as np

from dynreg.exceptions import ShapeError
from math_pose.kinematics import forward_kinematics
from math_pose.models import Pose, QVel
from math_pose.rotations import exp_map_array, quat_multiply


def skew_batch(vectors):
    """Cross-product matrices for an (n, 3) array: skew(a) @ b == a × b."""
    vectors = np.asarray(vectors, dtype=float)
    out = np.zeros(vectors.shape[:-1] + (3, 3))
    x, y, z = vectors[..., 0], vectors[..., 1], vectors[..., 2]
    out[..., 0, 1], out[..., 0, 2] = -z, y
    out[..., 1, 0], out[..., 1, 2] = z, -x
    out[..., 2, 0], out[..., 2, 1] = -y, x
    return out


@dataclass(frozen=True, eq=False)
class BodyKinematics:
    """Configuration-dependent quantities shared by one substep.

    coms: world centers of mass (B, 3)
    jac_lin: COM velocity Jacobians (B, 3, nv)
    jac_ang: angular velocity Jacobians (B, 3, nv)
    inertia_world: inertia tensors about the COM in world axes (B, 3, 3)
    """

    frames: object
    coms: np.ndarray
    jac_lin: np.ndarray
    jac_ang: np.ndarray
    inertia_world: np.ndarray

    def point_jacobian(self, body, point):
        """Velocity Jacobian (3, nv) of a world point rigidly attached to `body`."""
        arm = np.asarray(point, dtype=float) - self.coms[body]
        return self.jac_lin[body] - skew_batch(arm) @ self.jac_ang[body]


def body_kinematics(model, pose):
    frames = forward_kinematics(model, pose)
    num_bodies, nv = model.num_bodies, model.nv
    coms = frames.positions + np.einsum("bij,bj->bi", frames.rotations, model.coms)

    jac_ang = np.zeros((num_bodies, 3, nv))
    jac_ang[:, :, 3:6] = np.eye(3)
    jac_lin = np.zeros((num_bodies, 3, nv))
    jac_lin[:, :, 0:3] = np.eye(3)
    jac_lin[:, :, 3:6] = -skew_batch(coms - frames.positions[0])
    for body in model.ball_bodies:
        cols = slice(model.velocity_index(body), model.velocity_index(body) + 3)
        moved = model.subtree[body]
        axes = frames.axes[body]
        jac_ang[moved, :, cols] = axes
        jac_lin[moved, :, cols] = -skew_batch(coms[moved] - frames.positions[body]) @ axes

    inertia_world = frames.rotations @ model.inertias @ np.swapaxes(frames.rotations, 1, 2)
    return BodyKinematics(frames, coms, jac_lin, jac_ang, inertia_world)


def mass_matrix(model, kin):
    lin = np.einsum("bin,b,bim->nm", kin.jac_lin, model.masses, kin.jac_lin)
    ang = np.einsum("bin,bij,bjm->nm", kin.jac_ang, kin.inertia_world, kin.jac_ang)
    matrix = lin + ang
    return 0.5 * (matrix + matrix.T)


def euler_axes_rate(angles, rates):
    """Time derivative of the parent-frame Euler axes matrix, shape (n, 3, 3)."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 3)
    rates = np.asarray(rates, dtype=float).reshape(-1, 3)
    ca, sa = np.cos(angles[:, 0]), np.sin(angles[:, 0])
    cb, sb = np.cos(angles[:, 1]), np.sin(angles[:, 1])
    da, db = rates[:, 0], rates[:, 1]
    out = np.zeros((angles.shape[0], 3, 3))
    out[:, 1, 1] = -sa * da
    out[:, 2, 1] = ca * da
    out[:, 0, 2] = cb * db
    out[:, 1, 2] = -ca * cb * da + sa * sb * db
    out[:, 2, 2] = -sa * cb * da - ca * sb * db
    return out


def body_velocities(kin, qvel_vector):
    """World COM linear and angular velocities of every body."""
    return kin.jac_lin @ qvel_vector, kin.jac_ang @ qvel_vector


def bias_forces(model, pose, qvel, kin, gravity):
    """h(q, q̇): generalized velocity-product and gravity forces."""
    frames = kin.frames
    num_bodies = model.num_bodies
    angles = pose.joint_angles.reshape(-1, 3)
    rates = qvel.joint_vel.reshape(-1, 3)
    axes_rate = euler_axes_rate(angles, rates)

    omega = np.zeros((num_bodies, 3))
    alpha = np.zeros((num_bodies, 3))
    acc = np.zeros((num_bodies, 3))
    omega[0] = qvel.root_ang_vel
    for level in model.levels[1:]:
        parents = model.parents[level]
        arm = frames.positions[level] - frames.positions[parents]
        w_par = omega[parents]
        acc[level] = acc[parents] + np.cross(alpha[parents], arm) + np.cross(w_par, np.cross(w_par, arm))

        slots = model.joint_slot[level]
        ball = slots >= 0
        rel = np.zeros((level.size, 3))
        spin = np.zeros((level.size, 3))
        if np.any(ball):
            bodies, used = level[ball], slots[ball]
            rel[ball] = np.einsum("kij,kj->ki", frames.axes[bodies], rates[used])
            local = np.einsum("kij,kj->ki", axes_rate[used], rates[used])
            spin[ball] = np.einsum("kij,kj->ki", frames.rotations[parents[ball]], local)
        omega[level] = w_par + rel
        alpha[level] = alpha[parents] + np.cross(w_par, rel) + spin

    arm = kin.coms - frames.positions
    com_acc = acc + np.cross(alpha, arm) + np.cross(omega, np.cross(omega, arm))
    force = model.masses[:, None] * (com_acc - np.asarray(gravity, dtype=float))
    moment = np.einsum("bij,bj->bi", kin.inertia_world, alpha) + np.cross(
        omega, np.einsum("bij,bj->bi", kin.inertia_world, omega)
    )
    return generalized_wrench(kin, force, moment)


def generalized_wrench(kin, forces, torques):
    """Σ_k J_linᵀ F_k + J_angᵀ T_k for forces at the COMs and torques about them."""
    return np.einsum("bin,bi->n", kin.jac_lin, forces) + np.einsum("bin,bi->n", kin.jac_ang, torques)


def linear_momentum(model, kin, qvel_vector):
    return np.einsum("b,bin,n->i", model.masses, kin.jac_lin, qvel_vector)


def pd_torque(q_d, q, qdot, kp, kd):
    """τ = kp ∘ (q_d − q) − kd ∘ q̇ on the non-root degrees of freedom."""
    arrays = [np.asarray(a, dtype=float).reshape(-1) for a in (q_d, q, qdot, kp, kd)]
    sizes = {a.size for a in arrays}
    if len(sizes) != 1:
        raise ShapeError(f"pd_torque inputs disagree in length: {[a.size for a in arrays]}")
    q_d, q, qdot, kp, kd = arrays
    return kp * (q_d - q) - kd * qdot


def stable_pd_torque(q_d, q, qdot, kp, kd, dt):
    """PD torque evaluated at the predicted position q + dt·q̇.

    The matching −kd·dt·q̈ term is not included; the caller adds dt·kd to the
    diagonal of the mass matrix instead.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return pd_torque(q_d, q + dt * qdot, qdot, kp, kd)


def integrate(pose, qvel, qacc, dt):
    """Semi-implicit Euler: velocities first, then positions with the new velocities."""
    velocity = qvel.as_vector() + dt * np.asarray(qacc, dtype=float)
    lin, ang, rates = velocity[:3], velocity[3:6], velocity[6:]
    root_rot = quat_multiply(exp_map_array(ang * dt), pose.root_rot.array)
    new_pose = Pose(pose.root_pos + dt * lin, root_rot, pose.joint_angles + dt * rates)
    return new_pose, QVel(lin, ang, rates)
