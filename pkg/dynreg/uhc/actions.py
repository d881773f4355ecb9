import numpy as np
from django.conf import settings

from dynreg.exceptions import ShapeError
from physics_sim.models import ControlInput

from .models import UHCAction


def residual_action_to_pd_target(q_hat_next, action, force_scale=settings.RESIDUAL_FORCE_SCALE,
                                 torque_scale=settings.RESIDUAL_TORQUE_SCALE):
    """PD targets q^d = q̂ joint angles + offsets; η scaled to newtons and newton-metres.

    The simulator clamps the wrench to its ceilings.
    """
    if not isinstance(action, UHCAction):
        action = UHCAction.from_vector(action, q_hat_next.joint_angles.size)
    if action.pd_offsets.size != q_hat_next.joint_angles.size:
        raise ShapeError(
            f"action has {action.pd_offsets.size} PD offsets, target pose has {q_hat_next.joint_angles.size} angles"
        )
    wrench = np.concatenate([force_scale * action.wrench[:3], torque_scale * action.wrench[3:]])
    return ControlInput(q_hat_next.joint_angles + action.pd_offsets, wrench)
