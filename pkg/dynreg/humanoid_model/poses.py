from dataclasses import dataclass, field

import numpy as np

from dynreg.exceptions import ShapeError
from math_pose.kinematics import forward_kinematics


@dataclass(frozen=True)
class LimitViolation:
    joint: str
    axis: int
    angle: float
    lower: float
    upper: float


@dataclass(frozen=True)
class PoseReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def describe(self):
        if self.ok:
            return "ok"
        return "; ".join(
            f"{v.joint}[{'xyz'[v.axis]}] = {v.angle:.4f} outside [{v.lower:.4f}, {v.upper:.4f}]"
            for v in self.violations
        )


def validate_pose_against_model(model, pose):
    """DoF check (raises ShapeError) plus a per-joint limit report."""
    if pose.joint_angles.size != model.num_angles:
        raise ShapeError(
            f"pose has {pose.joint_angles.size} joint angles but model {model.name!r} "
            f"has {model.num_angles}"
        )
    limits = model.joint_limits
    angles = pose.joint_angles
    outside = np.flatnonzero((angles < limits[:, 0]) | (angles > limits[:, 1]))
    violations = []
    for index in outside:
        body = model.ball_bodies[index // 3]
        violations.append(
            LimitViolation(
                joint=model.bodies[body].name,
                axis=int(index % 3),
                angle=float(angles[index]),
                lower=float(limits[index, 0]),
                upper=float(limits[index, 1]),
            )
        )
    return PoseReport(tuple(violations))


def capsule_world_points(model, frames):
    """World endpoints (B, 2, 3) of every capsule core segment."""
    return frames.positions[:, None, :] + np.einsum("bij,bkj->bki", frames.rotations, model.segments)


def lowest_point(model, pose):
    frames = forward_kinematics(model, pose)
    ends = capsule_world_points(model, frames)
    return float(np.min(ends[:, :, 2] - model.radii[:, None]))


def adjust_start_height(model, pose, clearance=0.0):
    """Shift the root vertically so the lowest capsule point sits `clearance` above z = 0."""
    shift = clearance - lowest_point(model, pose)
    return pose.replace(root_pos=pose.root_pos + np.array([0.0, 0.0, shift]))
