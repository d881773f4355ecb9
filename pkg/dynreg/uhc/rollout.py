import logging

import numpy as np

from dynreg.exceptions import SimulationDivergedError
from math_pose.kinematics import joint_positions
from math_pose.models import QVel
from nn_rl_core.models import Transition, TrajectoryBuffer
from physics_sim.simulator import Simulator

from .models import Episode
from .reward import uhc_reward

logger = logging.getLogger(__name__)


def tracking_error(model, q, q_hat):
    """Mean world distance (m) between corresponding joint positions."""
    return float(np.mean(np.linalg.norm(joint_positions(model, q) - joint_positions(model, q_hat), axis=1)))


def uhc_rollout(agent, clip, sim, rng=None, start=0, deterministic=False, termination_threshold=None):
    """Drive the simulated humanoid along `clip` with the controller.

    The simulator starts on the first frame at rest. Each step builds the
    features toward the next frame, samples an action, steps the simulator and
    scores the result. The episode ends early when the mean joint error passes
    the termination threshold; a divergence ends it with a zero-reward terminal
    transition.
    """
    model = agent.model
    threshold = agent.config.termination_threshold if termination_threshold is None else termination_threshold
    velocities = clip.velocities
    state = sim.reset(clip.poses[0], QVel.zeros(model.num_angles))
    episode = Episode(clip=clip.name, start=start, states=[state], targets=[clip.poses[0]])

    for t in range(clip.num_frames - 1):
        target = clip.poses[t + 1]
        features = agent.features(state, target)
        action, log_prob, vector = agent.act(features, rng, deterministic)
        value = agent.value(features)
        try:
            state = sim.step(state, agent.control(target, action))
        except SimulationDivergedError as exc:
            logger.info("episode %s diverged at step %d (substep %d)", clip.name, t, exc.substep)
            episode.transitions.append(Transition(features, vector, log_prob, 0.0, True, value))
            episode.diverged = episode.fell = True
            return episode
        sim.state = state

        reward, _ = uhc_reward(model, state.q, target, state.qdot, velocities[t + 1], action.wrench)
        fell = tracking_error(model, state.q, target) > threshold
        episode.transitions.append(Transition(features, vector, log_prob, reward, fell, value))
        episode.states.append(state)
        episode.targets.append(target)
        if fell:
            episode.fell = True
            return episode

    episode.bootstrap_value = agent.value(agent.features(state, clip.poses[-1]))
    return episode


def collect_uhc_samples(agent, sampler, sim, rng, num_samples, capacity=None):
    """Episodes on sampler-drawn windows until the buffer holds `num_samples` transitions."""
    buffer = TrajectoryBuffer(capacity or max(num_samples, 1))
    lengths = []
    while len(buffer) < num_samples:
        clip_index, start = sampler.sample(rng)
        episode = uhc_rollout(agent, sampler.window_of(clip_index, start), sim, rng, start=start)
        buffer.add_episode(episode.transitions, episode.bootstrap_value)
        lengths.append(episode.length)
    logger.debug("collected %d samples over %d episodes", len(buffer), len(lengths))
    return buffer


def collect_worker(agent, sampler, scene, sim_params, rng, num_samples):
    """Rollout worker: its own simulator, a private buffer."""
    sim = Simulator(agent.model, scene, sim_params)
    return collect_uhc_samples(agent, sampler, sim, rng, num_samples)
