import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from math_pose.kinematics import finite_difference_velocity, joint_positions
from math_pose.models import QVel

logger = logging.getLogger(__name__)


def mean_joint_distance(sim_joint_pos, kin_joint_pos):
    return float(np.mean(np.linalg.norm(np.asarray(sim_joint_pos) - np.asarray(kin_joint_pos), axis=-1)))


def fail_safe_monitor(sim_joint_pos, kin_joint_pos, threshold=settings.FAILSAFE_THRESHOLD):
    """True when the mean joint position difference exceeds the threshold."""
    return mean_joint_distance(sim_joint_pos, kin_joint_pos) > threshold


@dataclass(frozen=True, eq=False)
class ResetDecision:
    reset: bool
    error: float
    pose: object = None
    velocity: QVel = None


class FailSafe:
    """Restarts the simulation from the kinematic pose when tracking breaks down.

    The restart velocity is the finite difference of the last two kinematic poses.
    """

    def __init__(self, model, threshold=settings.FAILSAFE_THRESHOLD, dt=1.0 / settings.MOTION_FPS):
        self.model = model
        self.threshold = threshold
        self.dt = dt
        self.resets = 0

    def check(self, sim_pose, kin_pose, previous_kin_pose=None):
        error = mean_joint_distance(joint_positions(self.model, sim_pose), joint_positions(self.model, kin_pose))
        if error <= self.threshold:
            return ResetDecision(False, error)
        if previous_kin_pose is None:
            velocity = QVel.zeros(self.model.num_angles)
        else:
            velocity = finite_difference_velocity([previous_kin_pose, kin_pose], self.dt)[0]
        return ResetDecision(True, error, kin_pose, velocity)

    def apply(self, sim, state, decision):
        """Inject the kinematic pose when the decision calls for it; returns the state to continue from."""
        if not decision.reset:
            return state
        self.resets += 1
        logger.info("fail-safe reset %d: mean joint error %.3f m", self.resets, decision.error)
        restarted = sim.set_state(decision.pose, decision.velocity, object_poses=state.objects)
        sim.state = restarted.replace(sim_time=state.sim_time)
        return sim.state
