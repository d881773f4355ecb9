"""Penalty contacts between capsule bodies, the ground plane and scene objects.

Normal force  fn = k·depth⁺ − c·(normal speed⁺), clamped at zero.
Friction      ft = −min(kf·|v_t|, μ·fn) · v_t/|v_t|   (regularized Coulomb).

The ⁺ quantities are taken at the end of the substep, so the normal forces of
every contact are solved together against the Delassus matrix of the contact
normals, (1 + dt·a·W) fn = k·depth − a·v_free with a = k·dt + c, and contacts
pulling instead of pushing leave the active set. A contact at rest settles at
depth m·g/k whatever its effective mass. Candidates within a speculative
margin of touching take part as springs only. Friction stays explicit, its
viscosity capped from the contact's effective mass.
"""

from dataclasses import dataclass

import numpy as np

from humanoid_model.geometry import box_corners
from math_pose.rotations import quat_to_matrix

from .dynamics import skew_batch
from .models import ContactPoint

VISCOSITY_CAP = 0.25
SPECULATIVE_SPEED = 10.0
UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class ContactResult:
    """Resolved contact set plus the resulting wrenches.

    body_forces / body_torques act at and about each humanoid body COM;
    object_forces / object_torques act at and about each scene object center.
    """

    contacts: tuple
    body_forces: np.ndarray
    body_torques: np.ndarray
    object_forces: np.ndarray
    object_torques: np.ndarray


@dataclass
class _Candidate:
    body: int
    point: np.ndarray
    normal: np.ndarray
    depth: float
    other: str
    kind: str
    other_index: int = -1


def segment_closest_points(p1, q1, p2, q2, eps=1e-12):
    """Closest points between segments [p1, q1] and [p2, q2]."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a <= eps and e <= eps:
        return p1, p2
    if a <= eps:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= eps:
            s, t = np.clip(-c / a, 0.0, 1.0), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                s, t = np.clip(-c / a, 0.0, 1.0), 0.0
            elif t > 1.0:
                s, t = np.clip((b - c) / a, 0.0, 1.0), 1.0
    return p1 + s * d1, p2 + t * d2


def capsule_plane_contacts(ends, radius, degenerate=False, margin=0.0):
    """(point, normal, depth) for capsule end spheres below z = 0 or within `margin` above it."""
    found = []
    for end in ends[:1] if degenerate else ends:
        depth = radius - end[2]
        if depth > -margin:
            found.append((np.array([end[0], end[1], 0.0]), UP.copy(), depth))
    return found


def capsule_box_contacts(ends, radius, center, rotation, half_extents, margin=0.0):
    """Contacts of a capsule against an oriented box, sampled at the segment
    ends and at the segment point nearest the box center."""
    half_extents = np.asarray(half_extents, dtype=float)
    local = (np.asarray(ends) - center) @ rotation
    start, direction = local[0], local[1] - local[0]
    length_sq = direction @ direction
    samples = {0.0}
    if length_sq > 1e-12:
        samples |= {1.0, float(np.clip(-(start @ direction) / length_sq, 0.0, 1.0))}

    found = []
    for t in sorted(samples):
        core = start + t * direction
        closest = np.clip(core, -half_extents, half_extents)
        offset = core - closest
        dist = np.linalg.norm(offset)
        if dist > 1e-12:
            if dist >= radius + margin:
                continue
            normal, depth, surface = offset / dist, radius - dist, closest
        else:
            gaps = half_extents - np.abs(core)
            axis = int(np.argmin(gaps))
            normal = np.zeros(3)
            normal[axis] = 1.0 if core[axis] >= 0.0 else -1.0
            depth = radius + gaps[axis]
            surface = core.copy()
            surface[axis] = normal[axis] * half_extents[axis]
        found.append((center + rotation @ surface, rotation @ normal, depth))
    return found


def capsule_capsule_contact(ends_a, radius_a, ends_b, radius_b, margin=0.0):
    """Single contact between two capsules; the normal points from b toward a."""
    on_a, on_b = segment_closest_points(ends_a[0], ends_a[1], ends_b[0], ends_b[1])
    offset = on_a - on_b
    dist = np.linalg.norm(offset)
    depth = radius_a + radius_b - dist
    if depth <= -margin:
        return None
    normal = offset / dist if dist > 1e-12 else UP.copy()
    return on_b + radius_b * normal, normal, depth


def object_segment(scene_object, state):
    rotation = quat_to_matrix(state.rotation)
    axis = rotation[:, 2] * scene_object.half_length
    return np.stack([state.position - axis, state.position + axis])


def body_segments(model, frames):
    return frames.positions[:, None, :] + np.einsum("bij,bkj->bki", frames.rotations, model.segments)


def detect_contacts(model, scene, kin, objects, margin=0.0):
    """Geometric contact candidates for the current configuration.

    A positive `margin` also returns pairs up to that far apart, with negative depth.
    """
    ends = body_segments(model, kin.frames)
    degenerate = [b.half_length == 0.0 for b in model.bodies]
    found = []
    for body in range(model.num_bodies):
        radius = model.radii[body]
        for point, normal, depth in capsule_plane_contacts(ends[body], radius, degenerate[body], margin):
            found.append(_Candidate(body, point, normal, depth, "ground", "ground"))
        for index, (obj, state) in enumerate(zip(scene.objects, objects)):
            if obj.shape == "box":
                hits = capsule_box_contacts(ends[body], radius, state.position, state.matrix, obj.half_extents, margin)
            else:
                hit = capsule_capsule_contact(ends[body], radius, object_segment(obj, state), obj.radius, margin)
                hits = [hit] if hit else []
            for point, normal, depth in hits:
                found.append(_Candidate(body, point, normal, depth, obj.name, "object", index))

    for name_a, name_b in model.collision_pairs:
        a, b = model.body_index(name_a), model.body_index(name_b)
        hit = capsule_capsule_contact(ends[a], model.radii[a], ends[b], model.radii[b], margin)
        if hit:
            found.append(_Candidate(a, hit[0], hit[1], hit[2], name_b, "self", b))

    for index, (obj, state) in enumerate(zip(scene.objects, objects)):
        if not obj.is_free or obj.shape != "box":
            continue
        corners = state.position + box_corners(obj.half_extents) @ state.matrix.T
        for corner in corners[corners[:, 2] < margin]:
            point = np.array([corner[0], corner[1], 0.0])
            found.append(_Candidate(-1, point, UP.copy(), -corner[2], obj.name, "object_ground", index))
    return found


def _object_compliance(scene_object, state, point):
    """Inverse effective-mass matrix of a free object at a world point."""
    rotation = state.matrix
    inertia = rotation @ scene_object.inertia @ rotation.T
    arm = skew_batch(point - state.position)
    return np.eye(3) / scene_object.mass - arm @ np.linalg.solve(inertia, arm)


def _object_point_velocity(state, point, lin_vel=None):
    lin_vel = state.lin_vel if lin_vel is None else lin_vel
    return lin_vel + np.cross(state.ang_vel, point - state.position)


def _object_side(candidate, scene):
    """+1 / −1 for the sign a free object enters the contact's relative velocity, 0 otherwise."""
    if candidate.kind not in ("object", "object_ground") or not scene.objects[candidate.other_index].is_free:
        return 0.0
    return 1.0 if candidate.kind == "object_ground" else -1.0


def normal_delassus(candidates, jacobians, mobility, scene, objects):
    """W[i, j]: normal speed change at contact i per unit normal impulse at contact j."""
    normals = np.stack([c.normal for c in candidates])
    normal_rows = np.einsum("ci,cin->cn", normals, jacobians)
    normal_mobility = np.einsum("ci,cin->cn", normals, mobility)
    delassus = normal_rows @ normal_mobility.T
    sides = np.array([_object_side(c, scene) for c in candidates])
    for index, obj in enumerate(scene.objects):
        members = [i for i, c in enumerate(candidates) if sides[i] and c.other_index == index]
        if not members:
            continue
        state = objects[index]
        rotation = state.matrix
        inertia = rotation @ obj.inertia @ rotation.T
        directions = sides[members, None] * normals[members]
        arms = np.cross(np.stack([candidates[i].point for i in members]) - state.position, directions)
        block = directions @ directions.T / obj.mass + arms @ np.linalg.solve(inertia, arms.T)
        delassus[np.ix_(members, members)] += block
    return delassus


def solve_normal_forces(delassus, depths, normal_speeds, stiffness, damping, dt):
    """Non-negative normal forces with the end-of-substep spring-damper law.

    Contacts not yet touching (depth <= 0) act as springs only, so they push
    exactly when they would penetrate by the end of the substep.
    """
    count = len(depths)
    gains = stiffness * dt + np.where(depths > 0.0, damping, 0.0)
    rhs = stiffness * depths - gains * normal_speeds
    system = np.eye(count) + dt * gains[:, None] * delassus
    forces = np.zeros(count)
    active = np.ones(count, dtype=bool)
    for _ in range(count + 1):
        forces[:] = 0.0
        if active.any():
            forces[active] = np.linalg.solve(system[np.ix_(active, active)], rhs[active])
        pulling = active & (forces < 0.0)
        if not pulling.any():
            break
        active &= ~pulling
    return np.maximum(forces, 0.0)


def resolve_contacts(model, scene, kin, qvel_vector, objects, params, solve, gravity=None, dt=None):
    """Contact forces for every candidate contact.

    `qvel_vector` is the humanoid's velocity at the end of the substep without
    contact forces; free objects get theirs from `gravity`. `solve(rhs)`
    applies the inverse of the substep's generalized inertia (mass matrix plus
    any implicit PD damping) to rhs of shape (nv, m).
    """
    dt = params.dt if dt is None else dt
    gravity = np.zeros(3) if gravity is None else np.asarray(gravity, dtype=float)
    candidates = detect_contacts(model, scene, kin, objects, margin=SPECULATIVE_SPEED * dt)
    body_forces = np.zeros((model.num_bodies, 3))
    body_torques = np.zeros((model.num_bodies, 3))
    object_forces = np.zeros((len(scene.objects), 3))
    object_torques = np.zeros((len(scene.objects), 3))
    if not candidates:
        return ContactResult((), body_forces, body_torques, object_forces, object_torques)

    jacobians = []
    for c in candidates:
        if c.body < 0:
            jacobians.append(np.zeros((3, model.nv)))
        elif c.kind == "self":
            jacobians.append(kin.point_jacobian(c.body, c.point) - kin.point_jacobian(c.other_index, c.point))
        else:
            jacobians.append(kin.point_jacobian(c.body, c.point))
    jacobians = np.stack(jacobians)
    mobility = solve(jacobians.reshape(-1, model.nv).T).T.reshape(jacobians.shape)
    compliance = np.einsum("cin,cjn->cij", jacobians, mobility)
    velocities = jacobians @ qvel_vector

    relatives, blocks = [], []
    for i, c in enumerate(candidates):
        side = _object_side(c, scene)
        relative = velocities[i].copy()
        block = compliance[i].copy()
        if side:
            obj, state = scene.objects[c.other_index], objects[c.other_index]
            velocity = _object_point_velocity(state, c.point, state.lin_vel + dt * gravity)
            relative = velocity if c.kind == "object_ground" else relative - velocity
            block += _object_compliance(obj, state, c.point)
        relatives.append(relative)
        blocks.append(block)

    depths = np.array([c.depth for c in candidates])
    normal_speeds = np.array([r @ c.normal for r, c in zip(relatives, candidates)])
    delassus = normal_delassus(candidates, jacobians, mobility, scene, objects)
    normal_forces = solve_normal_forces(
        delassus, depths, normal_speeds, params.contact_stiffness, params.contact_damping, dt
    )

    contacts = []
    for c, relative, block, normal_speed, normal_force in zip(candidates, relatives, blocks, normal_speeds, normal_forces):
        if c.depth <= 0.0 and normal_force == 0.0:
            continue
        eff_mass = 1.0 / max(float(np.linalg.eigvalsh(0.5 * (block + block.T))[-1]), 1e-12)
        viscosity = min(params.friction_viscosity, VISCOSITY_CAP * eff_mass / dt)
        tangential = relative - normal_speed * c.normal
        slip = np.linalg.norm(tangential)
        friction = np.zeros(3)
        if slip > 0.0 and params.friction_mu > 0.0:
            friction = -min(viscosity * slip, params.friction_mu * normal_force) * tangential / slip
        force = normal_force * c.normal + friction

        if c.kind == "object_ground":
            obj_state = objects[c.other_index]
            object_forces[c.other_index] += force
            object_torques[c.other_index] += np.cross(c.point - obj_state.position, force)
        else:
            body_forces[c.body] += force
            body_torques[c.body] += np.cross(c.point - kin.coms[c.body], force)
            if c.kind == "self":
                body_forces[c.other_index] -= force
                body_torques[c.other_index] -= np.cross(c.point - kin.coms[c.other_index], force)
            elif _object_side(c, scene):
                obj_state = objects[c.other_index]
                object_forces[c.other_index] -= force
                object_torques[c.other_index] -= np.cross(c.point - obj_state.position, force)
        contacts.append(
            ContactPoint(
                body=c.body,
                point=c.point,
                normal=c.normal,
                depth=max(c.depth, 0.0),
                normal_force=float(normal_force),
                friction_force=friction,
                other=c.other,
                kind=c.kind,
            )
        )
    return ContactResult(tuple(contacts), body_forces, body_torques, object_forces, object_torques)
