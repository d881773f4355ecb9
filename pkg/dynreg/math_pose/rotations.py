"""Rotation algebra on wxyz quaternions.

Conventions used across the project:
  * quaternions are stored (w, x, y, z) with w >= 0
  * Euler angles are intrinsic X then Y then Z, i.e. R = Rx(a) Ry(b) Rz(c)
  * heading is the yaw about world z from a swing-twist split
"""

import numpy as np
from scipy.spatial.transform import Rotation as sRot

from dynreg.exceptions import GimbalLockError, InvalidRotationError, ShapeError

from .models import Quat, canonicalize

EULER_ORDER = "XYZ"
GIMBAL_MARGIN = 1e-6


def as_wxyz(q):
    if isinstance(q, Quat):
        return q.array
    return canonicalize(q)


def to_scipy(q):
    return sRot.from_quat(as_wxyz(q), scalar_first=True)


def from_scipy(rotation):
    return canonicalize(rotation.as_quat(scalar_first=True))


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a, b):
    """Hamilton product a * b on wxyz arrays (broadcasts over leading axes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return canonicalize(out)


def quat_diff(a, b):
    """Rotation difference a ∘ b⁻¹ as a canonical Quat."""
    return Quat.from_array(quat_multiply(as_wxyz(a), quat_conjugate(as_wxyz(b))))


def quat_diff_array(a, b):
    return quat_multiply(canonicalize(a), quat_conjugate(canonicalize(b)))


def rotation_angle(q):
    """Angle in [0, π] of the rotation(s) represented by q."""
    q = canonicalize(q.array if isinstance(q, Quat) else q)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def quat_to_matrix(q):
    return to_scipy(q).as_matrix()


def matrix_to_quat(matrix):
    return from_scipy(sRot.from_matrix(matrix))


def quat_rotate(q, vectors):
    return to_scipy(q).apply(vectors)


def euler_to_quat(angles, convention=EULER_ORDER):
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (3,):
        raise ShapeError(f"Euler triplet must have shape (3,), got {angles.shape}")
    if not np.all(np.isfinite(angles)):
        raise InvalidRotationError("Euler angles are not finite")
    return Quat.from_array(from_scipy(sRot.from_euler(convention, angles)))


def euler_to_matrix(angles, convention=EULER_ORDER):
    """Rotation matrices for an (..., 3) array of Euler triplets."""
    angles = np.asarray(angles, dtype=float)
    flat = angles.reshape(-1, 3)
    if flat.shape[0] == 0:
        return np.zeros(angles.shape[:-1] + (3, 3))
    return sRot.from_euler(convention, flat).as_matrix().reshape(angles.shape[:-1] + (3, 3))


def quat_to_euler(q, convention=EULER_ORDER, strict=True):
    """Inverse of euler_to_quat.

    The middle angle of the intrinsic XYZ order sits at ±π/2 in gimbal lock;
    strict mode refuses to decompose within GIMBAL_MARGIN of it.
    """
    rotation = to_scipy(q)
    if convention == EULER_ORDER and strict:
        sin_pitch = rotation.as_matrix()[0, 2]
        if abs(abs(np.arcsin(np.clip(sin_pitch, -1.0, 1.0))) - np.pi / 2) <= GIMBAL_MARGIN:
            raise GimbalLockError("pitch within 1e-6 of ±π/2, Euler decomposition is ambiguous")
    return rotation.as_euler(convention)


def exp_map(rotvec):
    rotvec = np.asarray(rotvec, dtype=float)
    if not np.all(np.isfinite(rotvec)):
        raise InvalidRotationError("rotation vector is not finite")
    return Quat.from_array(from_scipy(sRot.from_rotvec(rotvec)))


def exp_map_array(rotvecs):
    return from_scipy(sRot.from_rotvec(np.asarray(rotvecs, dtype=float)))


def log_map(q):
    return to_scipy(q).as_rotvec()


def yaw_quat(psi):
    return Quat(np.cos(psi / 2.0), 0.0, 0.0, np.sin(psi / 2.0))


def yaw_matrix(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def heading_angle(q):
    """Swing-twist yaw of wxyz quaternion(s), in [-π, π]."""
    q = canonicalize(q.array if isinstance(q, Quat) else q)
    return 2.0 * np.arctan2(q[..., 3], q[..., 0])


def heading_decompose(rot):
    """Split rot into yaw_quat(ψ) ∘ residual with a yaw-free residual."""
    q = as_wxyz(rot)
    psi = float(heading_angle(q))
    twist = yaw_quat(psi)
    residual = Quat.from_array(quat_multiply(quat_conjugate(twist.array), q))
    return psi, residual


def heading_gradient(q):
    """∂ψ/∂δ for a left (world-frame) perturbation exp(δ) ∘ q."""
    w, x, y, z = as_wxyz(q)
    denom = w * w + z * z
    if denom < 1e-12:
        return np.zeros(3)
    return np.array([w * y + x * z, y * z - w * x, denom]) / denom


def wrap_angle(angle):
    """Wrap to (-π, π]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_left_jacobian(phi):
    """Left Jacobian of SO(3): d exp(φ) = exp(J_l(φ) dφ) ∘ exp(φ)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    k = skew(phi)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * k + k @ k / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * k
        + (theta - np.sin(theta)) / theta**3 * (k @ k)
    )
