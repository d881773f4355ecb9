import logging

from django.conf import settings

from dynreg.exceptions import SimulationDivergedError
from math_pose.models import QVel
from metrics_eval.models import MetricsReport
from metrics_eval.report import score_sequence
from physics_sim.simulator import Simulator

from .rollout import tracking_error

logger = logging.getLogger(__name__)


def imitation_rollout(controller, model, clip, sim, threshold=settings.TERMINATION_THRESHOLD, rng=None):
    """Track every frame of `clip` from rest on its first frame.

    Returns (states, fell). The rollout stops at the first frame whose mean
    joint error passes `threshold` or whose step diverges; the states gathered
    up to there are kept.
    """
    state = sim.reset(clip.poses[0], QVel.zeros(model.num_angles))
    states, velocities = [state], clip.velocities
    for t in range(1, clip.num_frames):
        try:
            state = controller.track(sim, state, clip.poses[t], velocities[t], rng)
        except SimulationDivergedError as exc:
            logger.info("clip %s diverged at frame %d (substep %d)", clip.name, t, exc.substep)
            return states, True
        sim.state = state
        states.append(state)
        if tracking_error(model, state.q, clip.poses[t]) > threshold:
            logger.debug("clip %s fell at frame %d", clip.name, t)
            return states, True
    return states, False


def imitation_eval(controller, model, clips, scene=None, sim_params=None,
                   threshold=settings.TERMINATION_THRESHOLD, seed=None, config_hash=""):
    """MetricsReport of motion imitation: success means the clip was tracked to its end without a fall."""
    sim = Simulator(model, scene, sim_params)
    report = MetricsReport(seed=seed, config_hash=config_hash)
    for clip in clips:
        states, fell = imitation_rollout(controller, model, clip, sim, threshold)
        report.sequences.append(score_sequence(model, sim, clip, states, fell=fell, success_rule="walk"))
    aggregate = report.aggregate()
    logger.info(
        "imitation eval over %d clips: success %.3f, root error %.4f, mpjpe %.2f mm",
        len(report), aggregate["success"], aggregate["root_error"], aggregate["mpjpe"],
    )
    return report
