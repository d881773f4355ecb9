"""Capsule and box geometry: volumes, masses, inertia tensors, endpoints."""

import numpy as np

from dynreg.exceptions import DomainError


def capsule_volume(radius, half_length):
    length = 2.0 * half_length
    return np.pi * radius**2 * length + 4.0 / 3.0 * np.pi * radius**3


def capsule_mass(radius, half_length, density):
    """mass = density × (π r² L + 4/3 π r³), L = 2 × half_length."""
    if radius <= 0:
        raise DomainError(f"capsule radius must be positive, got {radius}")
    if half_length < 0:
        raise DomainError(f"capsule half_length must be non-negative, got {half_length}")
    if density <= 0:
        raise DomainError(f"density must be positive, got {density}")
    return density * capsule_volume(radius, half_length)


def _align_z(axis):
    """Rotation matrix taking +z onto the given unit axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    z = np.array([0.0, 0.0, 1.0])
    c = float(z @ axis)
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(z, axis)
    k = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + k + k @ k / (1.0 + c)


def capsule_inertia(radius, half_length, density, axis=(0.0, 0.0, 1.0)):
    """Solid-capsule inertia about its center, expressed in the body frame."""
    r, length = radius, 2.0 * half_length
    m_cyl = density * np.pi * r**2 * length
    m_caps = density * 4.0 / 3.0 * np.pi * r**3
    axial = m_cyl * r**2 / 2.0 + m_caps * 2.0 * r**2 / 5.0
    transverse = m_cyl * (r**2 / 4.0 + length**2 / 12.0) + m_caps * (
        2.0 * r**2 / 5.0 + length**2 / 4.0 + 3.0 * length * r / 8.0
    )
    align = _align_z(axis)
    return align @ np.diag([transverse, transverse, axial]) @ align.T


def box_inertia(mass, half_extents):
    ex, ey, ez = half_extents
    return mass / 3.0 * np.diag([ey**2 + ez**2, ex**2 + ez**2, ex**2 + ey**2])


def capsule_segment(center, axis, half_length):
    """Local endpoints (2, 3) of a capsule's core segment."""
    center = np.asarray(center, dtype=float)
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.stack([center - half_length * axis, center + half_length * axis])


def box_corners(half_extents):
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return signs * np.asarray(half_extents, dtype=float)
