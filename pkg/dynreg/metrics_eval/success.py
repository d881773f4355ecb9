"""Per-action interaction success.

  sit    the pelvis, or both leg roots at once, touch the chair
  push   the box moves more than PUSH_MIN_DISPLACEMENT from where it started
  step   a foot touching the box is at least STEP_MIN_RAISE above the ground
  avoid  the obstacle is never touched and the root ends within
         AVOID_MAX_END_DISTANCE of the desired end position
  walk   no other condition
A fall anywhere in the sequence scores 0 for every action.
"""

from dataclasses import dataclass

import numpy as np
from django.conf import settings

from dynreg.exceptions import UnknownActionError
from humanoid_model.poses import capsule_world_points
from math_pose.kinematics import forward_kinematics


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """What the success rules look at, extracted from a simulated sequence.

    object_contacts[t] is the set of humanoid body names touching the tracked
    object at frame t.
    """

    fell: bool = False
    object_contacts: tuple = ()
    object_displacement: float = 0.0
    step_height: float = 0.0
    end_position: np.ndarray = None
    desired_end: np.ndarray = None
    pelvis: str = "Pelvis"
    leg_roots: tuple = ()


def _sit(trace):
    legs = set(trace.leg_roots)
    return any(trace.pelvis in bodies or (legs and legs <= bodies) for bodies in trace.object_contacts)


def _push(trace):
    return trace.object_displacement > settings.PUSH_MIN_DISPLACEMENT


def _step(trace):
    return trace.step_height >= settings.STEP_MIN_RAISE


def _avoid(trace):
    if any(trace.object_contacts):
        return False
    if trace.end_position is None or trace.desired_end is None:
        return False
    offset = np.asarray(trace.end_position, dtype=float)[:2] - np.asarray(trace.desired_end, dtype=float)[:2]
    return float(np.linalg.norm(offset)) < settings.AVOID_MAX_END_DISTANCE


RULES = {
    "sit": _sit,
    "push": _push,
    "step": _step,
    "avoid": _avoid,
    "walk": lambda trace: True,
}


def success_check(action, trace):
    if action not in RULES:
        raise UnknownActionError(f"no success rule for action {action!r}; known: {', '.join(RULES)}")
    if trace.fell:
        return 0
    return int(bool(RULES[action](trace)))


def build_trace(model, scene, states, object_name="", fell=False, desired_end=None):
    """EpisodeTrace of simulated states against the scene object named `object_name`."""
    names = model.names
    contacts, displacement, step_height = [], 0.0, 0.0
    index = scene.index(object_name) if object_name else None
    feet = set()
    if "feet" in model.roles:
        role = model.role("feet")
        feet = set(role if isinstance(role, list) else [role])
    start = states[0].objects[index].position if index is not None else None

    for state in states:
        touching = set()
        if index is not None:
            bodies = {c.body for c in state.contacts if c.kind == "object" and c.other == object_name}
            touching = {names[b] for b in bodies}
            displacement = max(displacement, float(np.linalg.norm(state.objects[index].position - start)))
            touching_feet = sorted(bodies & feet)
            if touching_feet:
                ends = capsule_world_points(model, forward_kinematics(model, state.q))[touching_feet]
                lowest = ends[:, :, 2].min(axis=1) - model.radii[touching_feet]
                step_height = max(step_height, float(lowest.max()))
        contacts.append(frozenset(touching))

    leg_roots = ()
    if "leg_roots" in model.roles:
        leg_roots = tuple(names[i] for i in model.role("leg_roots"))
    pelvis = names[model.role("pelvis")] if "pelvis" in model.roles else names[0]
    return EpisodeTrace(
        fell=fell,
        object_contacts=tuple(contacts),
        object_displacement=displacement,
        step_height=step_height,
        end_position=states[-1].q.root_pos.copy(),
        desired_end=desired_end,
        pelvis=pelvis,
        leg_roots=leg_roots,
    )
