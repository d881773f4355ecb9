import logging
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from django.conf import settings

from dynreg.exceptions import SimulationDivergedError
from math_pose.kinematics import finite_difference_velocity
from math_pose.models import QVel
from metrics_eval.failsafe import FailSafe, ResetDecision
from metrics_eval.models import MetricsReport
from metrics_eval.report import score_sequence
from physics_sim.serializer import TrajectoryDump
from physics_sim.simulator import Simulator

from .integration import DT
from .models import SceneContext

logger = logging.getLogger(__name__)


def rollout_test(agent, controller, clip, scene=None, sim_params=None, threshold=settings.FAILSAFE_THRESHOLD,
                 dump_path=None, config_hash=""):
    """Closed-loop test rollout with mean actions and the fail-safe armed.

    The first pose comes from the initialization network. A divergence is
    handled like a fail-safe trigger. Returns (states, SequenceMetrics).
    """
    model = agent.model
    context = SceneContext.from_clip(clip)
    sim = Simulator(model, scene, sim_params)
    failsafe = FailSafe(model, threshold, DT)
    kin_pose, _ = agent.kin_init(context)
    state = sim.reset(kin_pose, QVel.zeros(model.num_angles))
    hidden = agent.policy.initial_hidden()
    states = [state]

    dump = TrajectoryDump(dump_path, model, sim.scene, config_hash, clip.name, clip.action) if dump_path else None
    with dump if dump is not None else nullcontext():
        if dump is not None:
            dump.write(state, sim.measure_penetration(state))
        for t in range(clip.num_frames - 1):
            target, _, _, _, hidden = agent.step(context, t, state.q, hidden, deterministic=True)
            target_vel = finite_difference_velocity([kin_pose, target], DT)[0]
            try:
                stepped = controller.track(sim, state, target, target_vel)
                sim.state = stepped
                decision = failsafe.check(stepped.q, target, kin_pose)
            except SimulationDivergedError as exc:
                logger.info("clip %s diverged at frame %d (substep %d)", clip.name, t + 1, exc.substep)
                stepped = state
                decision = ResetDecision(True, np.inf, target, target_vel)
            state = failsafe.apply(sim, stepped, decision)
            kin_pose = target
            states.append(state)
            if dump is not None:
                dump.write(state, sim.measure_penetration(state), reset=decision.reset)

    metrics = score_sequence(
        model, sim, clip, states, fell=failsafe.resets > 0, failsafe_resets=failsafe.resets
    )
    return states, metrics


def evaluate_kin(agent, controller, clips, scenes=None, sim_params=None, threshold=settings.FAILSAFE_THRESHOLD,
                 seed=None, config_hash="", dump_dir=None):
    """MetricsReport of test rollouts over `clips`; `scenes` maps scene names to Scene objects."""
    report = MetricsReport(seed=seed, config_hash=config_hash)
    for clip in clips:
        dump_path = Path(dump_dir) / f"{clip.name}.jsonl" if dump_dir is not None else None
        _, metrics = rollout_test(
            agent, controller, clip, (scenes or {}).get(clip.scene), sim_params, threshold, dump_path, config_hash
        )
        report.sequences.append(metrics)
    aggregate = report.aggregate()
    logger.info(
        "kinematic eval over %d clips: success %.3f, mpjpe %.2f mm, resets %.2f",
        len(report), aggregate["success"], aggregate["mpjpe"], aggregate["failsafe_resets"],
    )
    return report
