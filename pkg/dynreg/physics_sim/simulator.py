import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from dynreg.exceptions import ShapeError, SimulationDivergedError
from humanoid_model.models import Scene
from math_pose.models import QVel
from math_pose.rotations import exp_map_array, quat_multiply

from .contact import detect_contacts, resolve_contacts
from .dynamics import (
    bias_forces,
    body_kinematics,
    body_velocities,
    generalized_wrench,
    integrate,
    linear_momentum,
    mass_matrix,
    pd_torque,
    stable_pd_torque,
)
from .models import ObjectState, SimParams, SimState, clamp_wrench

logger = logging.getLogger(__name__)


class Simulator:
    """One humanoid in one scene.

    `step` is a pure function of (state, control); `advance` applies it to the
    state the instance owns. Instances are single-threaded; parallel workers
    each build their own.
    """

    def __init__(self, model, scene=None, params=None):
        self.model = model
        self.scene = scene if scene is not None else Scene("empty")
        self.params = params if params is not None else SimParams.from_settings()
        self.gravity = np.asarray(self.params.gravity, dtype=float)
        self.state = None

    # state injection

    def initial_objects(self):
        return tuple(ObjectState.at_rest(obj) for obj in self.scene.objects)

    def reset(self, pose, qvel=None, objects=None):
        """Fresh episode state at sim_time 0; objects default to their scene poses."""
        objects = self.initial_objects() if objects is None else tuple(objects)
        self.state = self._inject(pose, qvel, objects, sim_time=0.0)
        return self.state

    def set_state(self, q, qdot, object_poses=None):
        """Inject (q, q̇) and optionally object poses, keeping the current sim_time."""
        sim_time = self.state.sim_time if self.state is not None else 0.0
        if object_poses is None:
            objects = self.state.objects if self.state is not None else self.initial_objects()
        else:
            objects = tuple(self._as_object_state(p) for p in object_poses)
        self.state = self._inject(q, qdot, objects, sim_time)
        return self.state

    def _as_object_state(self, value):
        if isinstance(value, ObjectState):
            return value
        position, rotation = value
        return ObjectState(position, rotation)

    def _inject(self, q, qdot, objects, sim_time):
        qdot = qdot if qdot is not None else QVel.zeros(self.model.num_angles)
        self._check_shapes(q, qdot, objects)
        state = SimState(q=q, qdot=qdot, objects=objects, sim_time=sim_time)
        return state.replace(contacts=self.contact_resolve(state).contacts)

    def _check_shapes(self, q, qdot, objects):
        if q.joint_angles.size != self.model.num_angles:
            raise ShapeError(f"pose has {q.joint_angles.size} joint angles, model expects {self.model.num_angles}")
        if qdot.joint_vel.size != self.model.num_angles:
            raise ShapeError(f"velocity has {qdot.joint_vel.size} joint rates, model expects {self.model.num_angles}")
        if len(objects) != len(self.scene.objects):
            raise ShapeError(f"got {len(objects)} object states for {len(self.scene.objects)} scene objects")

    # dynamics

    def _operator(self, kin, dt):
        matrix = mass_matrix(self.model, kin)
        if self.params.pd_mode == "stable" and self.model.num_angles:
            matrix[6:, 6:] += dt * np.diag(self.model.kd)
        return matrix

    def _factor(self, matrix, substep):
        try:
            return cho_factor(matrix)
        except LinAlgError as exc:
            raise SimulationDivergedError("generalized inertia is not positive definite", substep) from exc

    def contact_resolve(self, state):
        """Contact forces and ContactPoint list for a state under gravity alone, without stepping it."""
        kin = body_kinematics(self.model, state.q)
        factor = self._factor(self._operator(kin, self.params.dt), substep=0)

        def solve(rhs):
            return cho_solve(factor, rhs)

        free = -bias_forces(self.model, state.q, state.qdot, kin, self.gravity)
        velocity = state.qdot.as_vector() + self.params.dt * solve(free)
        return resolve_contacts(self.model, self.scene, kin, velocity, state.objects, self.params, solve, self.gravity)

    def step(self, state, control, substeps=None, dt_sub=None):
        """Advance `substeps` substeps of semi-implicit Euler (one control step by default)."""
        substeps = self.params.substeps if substeps is None else substeps
        dt = self.params.dt if dt_sub is None else dt_sub
        control.check(self.model)
        self._check_shapes(state.q, state.qdot, state.objects)
        wrench = clamp_wrench(control.residual_wrench, self.params.force_ceiling, self.params.torque_ceiling)

        pose, qvel, objects = state.q, state.qdot, state.objects
        contacts = state.contacts
        kin = None
        for substep in range(substeps):
            try:
                pose, qvel, objects, contacts, kin = self._substep(pose, qvel, objects, control, wrench, dt, kin)
                self._check_finite(pose, qvel, objects)
            except SimulationDivergedError:
                logger.warning("simulation diverged at substep %d (t=%.4f s)", substep, state.sim_time + substep * dt)
                raise SimulationDivergedError("simulation diverged", substep) from None
            except (ValueError, FloatingPointError) as exc:
                logger.warning("simulation diverged at substep %d (t=%.4f s)", substep, state.sim_time + substep * dt)
                raise SimulationDivergedError(f"simulation diverged: {exc}", substep) from exc
        return SimState(q=pose, qdot=qvel, objects=objects, contacts=contacts, sim_time=state.sim_time + substeps * dt)

    def advance(self, control):
        self.state = self.step(self.state, control)
        return self.state

    def _substep(self, pose, qvel, objects, control, wrench, dt, kin):
        model, params = self.model, self.params
        kin = kin if kin is not None else body_kinematics(model, pose)
        velocity = qvel.as_vector()
        factor = self._factor(self._operator(kin, dt), substep=0)

        def solve(rhs):
            return cho_solve(factor, rhs)

        generalized = np.zeros(model.nv)
        if model.num_angles:
            if params.pd_mode == "stable":
                tau = stable_pd_torque(control.pd_target, pose.joint_angles, qvel.joint_vel, model.kp, model.kd, dt)
            else:
                tau = pd_torque(control.pd_target, pose.joint_angles, qvel.joint_vel, model.kp, model.kd)
            generalized[6:] = tau

        forces = np.zeros((model.num_bodies, 3))
        torques = np.zeros((model.num_bodies, 3))
        forces[0] += wrench[:3]
        torques[0] += np.cross(pose.root_pos - kin.coms[0], wrench[:3]) + wrench[3:]
        generalized += generalized_wrench(kin, forces, torques)
        generalized -= bias_forces(model, pose, qvel, kin, self.gravity)

        free_velocity = velocity + dt * solve(generalized)
        contact = resolve_contacts(model, self.scene, kin, free_velocity, objects, params, solve, self.gravity, dt)
        generalized += generalized_wrench(kin, contact.body_forces, contact.body_torques)
        forces += contact.body_forces

        qacc = solve(generalized)
        momentum = linear_momentum(model, kin, velocity) + dt * (forces.sum(axis=0) + model.total_mass * self.gravity)
        new_pose, new_qvel = integrate(pose, qvel, qacc, dt)
        new_kin = body_kinematics(model, new_pose)
        if params.conserve_momentum:
            drift = momentum - linear_momentum(model, new_kin, new_qvel.as_vector())
            new_qvel = QVel(new_qvel.root_lin_vel + drift / model.total_mass, new_qvel.root_ang_vel, new_qvel.joint_vel)

        new_objects = self._integrate_objects(objects, contact, dt)
        return new_pose, new_qvel, new_objects, contact.contacts, new_kin

    def _integrate_objects(self, objects, contact, dt):
        updated = []
        for index, (obj, state) in enumerate(zip(self.scene.objects, objects)):
            if not obj.is_free:
                updated.append(state)
                continue
            rotation = state.matrix
            inertia = rotation @ obj.inertia @ rotation.T
            lin_vel = state.lin_vel + dt * (contact.object_forces[index] / obj.mass + self.gravity)
            gyro = np.cross(state.ang_vel, inertia @ state.ang_vel)
            ang_vel = state.ang_vel + dt * np.linalg.solve(inertia, contact.object_torques[index] - gyro)
            rot = quat_multiply(exp_map_array(ang_vel * dt), state.rotation.array)
            updated.append(ObjectState(state.position + dt * lin_vel, rot, lin_vel, ang_vel))
        return tuple(updated)

    def _check_finite(self, pose, qvel, objects):
        limit = self.params.divergence_limit
        values = [pose.as_vector(), qvel.as_vector()]
        values += [np.concatenate([o.position, o.lin_vel, o.ang_vel]) for o in objects]
        for value in values:
            if not np.all(np.isfinite(value)) or np.max(np.abs(value), initial=0.0) > limit:
                raise SimulationDivergedError("state left the finite range", 0)

    # diagnostics

    def measure_penetration(self, state=None):
        """Mean depth (mm) over the humanoid's scene contacts; 0 without contacts."""
        state = state if state is not None else self.state
        depths = [c.depth for c in state.scene_contacts]
        return 1000.0 * float(np.mean(depths)) if depths else 0.0

    def kinetic_energy(self, state):
        kin = body_kinematics(self.model, state.q)
        velocity = state.qdot.as_vector()
        energy = 0.5 * velocity @ mass_matrix(self.model, kin) @ velocity
        for obj, obj_state in zip(self.scene.objects, state.objects):
            if obj.is_free:
                rotation = obj_state.matrix
                inertia = rotation @ obj.inertia @ rotation.T
                energy += 0.5 * obj.mass * obj_state.lin_vel @ obj_state.lin_vel
                energy += 0.5 * obj_state.ang_vel @ inertia @ obj_state.ang_vel
        return float(energy)

    def potential_energy(self, state):
        """Gravitational energy plus the elastic energy stored in the state's penetrations."""
        kin = body_kinematics(self.model, state.q)
        energy = -float(self.model.masses @ (kin.coms @ self.gravity))
        for obj, obj_state in zip(self.scene.objects, state.objects):
            if obj.is_free:
                energy -= obj.mass * float(obj_state.position @ self.gravity)
        candidates = detect_contacts(self.model, self.scene, kin, state.objects)
        energy += 0.5 * self.params.contact_stiffness * sum(c.depth**2 for c in candidates)
        return energy

    def total_energy(self, state):
        return self.kinetic_energy(state) + self.potential_energy(state)

    def linear_momentum(self, state):
        kin = body_kinematics(self.model, state.q)
        momentum = linear_momentum(self.model, kin, state.qdot.as_vector())
        for obj, obj_state in zip(self.scene.objects, state.objects):
            if obj.is_free:
                momentum = momentum + obj.mass * obj_state.lin_vel
        return momentum

    def body_velocities(self, state):
        kin = body_kinematics(self.model, state.q)
        return body_velocities(kin, state.qdot.as_vector())
