"""Training loops of the kinematic policy.

train_supervised            autoregressive rollouts of the policy alone; its own
                            predictions are fed back and compared with the ground truth
train_dynamics_regulated    rollouts through the controller and the simulator;
                            PPO on the step reward, then supervised epochs on the
                            inputs the simulated poses produced
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import trange

from dynreg.exceptions import InsufficientDataError, MissingDependencyError, SimulationDivergedError
from math_pose.kinematics import finite_difference_velocity
from math_pose.models import QVel
from nn_rl_core.checkpoints import save_checkpoint
from nn_rl_core.models import Transition, TrajectoryBuffer
from nn_rl_core.parallel import run_workers, split_budget, worker_rng
from physics_sim.simulator import Simulator
from uhc.rollout import tracking_error

from .agent import KinAgent
from .context import init_inputs, step_input
from .integration import DT, finite_integrate
from .losses import init_loss, supervised_loss
from .models import KinConfig, SceneContext, SupervisedEpisode
from .reward import kin_reward

logger = logging.getLogger(__name__)

SL_CHECKPOINT_NAME = "kin_sl.npz"
DYNREG_CHECKPOINT_NAME = "kin_dynreg.npz"

# random stream stages of worker_rng
SL_STAGE = 1
WARM_START_STAGE = 2
DYNREG_STAGE = 3


def _training_clips(clips):
    clips = list(clips)
    if not clips:
        raise InsufficientDataError("kinematic policy training needs at least one clip")
    for clip in clips:
        if clip.num_frames < 2:
            raise InsufficientDataError(f"clip {clip.name!r} has fewer than two frames")
        if not clip.has_context:
            raise InsufficientDataError(f"clip {clip.name!r} has no camera and feature channels")
    return clips


def sample_window(clips, rng, length):
    """A random clip cut to `length` transitions at a random start."""
    clip = clips[int(rng.integers(len(clips)))]
    start = int(rng.integers(max(1, clip.num_frames - length)))
    return clip.window(start, length + 1)


def _object_positions(context):
    return context.object_positions[1:] if context.has_object else None


def collect_supervised(agent, clip, start=None):
    """Mean-action rollout of the policy alone, fed its own predictions.

    It starts from the initialization network's pose unless `start` is given.
    """
    context = SceneContext.from_clip(clip)
    start = agent.kin_init(context)[0] if start is None else start
    hidden = agent.policy.initial_hidden()
    pose = start
    inputs, previous = [], []
    for t in range(clip.num_frames - 1):
        x = step_input(context, t, pose)
        mean, _, _, next_hidden = agent.policy.act_step(agent.policy_params, hidden, x, deterministic=True)
        inputs.append(x)
        previous.append(pose)
        pose, hidden = finite_integrate(mean, pose), next_hidden
    return SupervisedEpisode(
        clip=clip.name,
        inputs=np.stack(inputs),
        previous=previous,
        targets=list(clip.poses[1:]),
        object_positions=_object_positions(context),
        context=context,
        start=start,
    )


def sl_update(agent, episodes, epochs, rng):
    """Supervised epochs over recorded episodes; returns the mean per-frame loss of each epoch."""
    if not episodes:
        raise InsufficientDataError("supervised update without episodes")
    losses = []
    for _ in range(epochs):
        total, frames = 0.0, 0
        for index in rng.permutation(len(episodes)):
            episode = episodes[index]
            loss, grad, _ = supervised_loss(agent.model, agent.policy, agent.policy_params, episode)
            agent.sl_optimizer.step(agent.policy_params, grad / len(episode))
            total += loss
            frames += len(episode)
        losses.append(total / frames)
    return losses


def init_update(agent, clips, epochs, rng):
    """Supervised epochs of the initialization network on the first frame of every clip."""
    losses = []
    for _ in range(epochs):
        total = 0.0
        for index in rng.permutation(len(clips)):
            clip = clips[index]
            inputs, frame = init_inputs(SceneContext.from_clip(clip))
            loss, grad = init_loss(agent.init_network, agent.init_params, inputs, frame, clip.poses[0])
            agent.init_optimizer.step(agent.init_params, grad)
            total += loss
        losses.append(total / len(clips))
    return losses


def _save(agent, output_dir, name, rng, config_hash, done):
    if output_dir is not None:
        save_checkpoint(Path(output_dir) / name, agent.to_checkpoint(rng, config_hash, extra={"iteration": done}))


def train_supervised(model, clips, config=None, output_dir=None, log=None, config_hash="", progress=False,
                     agent=None, iterations=None, event="train_kin_sl", stage=SL_STAGE):
    """Supervised training of the step policy and the initialization network.

    Each iteration fills a memory of `sl_memory` predicted frames with
    autoregressive rollouts on random windows, then runs `sl_epochs` epochs
    over it. Iteration i draws from worker_rng(seed, i, 0, stage). Returns
    (agent, history).
    """
    clips = _training_clips(clips)
    config = config or KinConfig()
    agent = agent or KinAgent.build(model, config, np.random.default_rng(config.seed))
    iterations = config.iterations if iterations is None else iterations
    history = []

    for iteration in trange(iterations, desc=event, disable=not progress, leave=False):
        rng = worker_rng(config.seed, iteration, 0, stage)
        episodes, frames = [], 0
        while frames < config.sl_memory:
            episode = collect_supervised(agent, sample_window(clips, rng, config.episode_len))
            episodes.append(episode)
            frames += len(episode)
        losses = sl_update(agent, episodes, config.sl_epochs, rng)
        init_losses = init_update(agent, clips, config.sl_epochs, rng)

        record = {"sl_loss": losses[-1], "init_loss": init_losses[-1], "frames": frames, "episodes": len(episodes)}
        history.append(record)
        logger.info(
            "kin sl iteration %d: loss %.5f, init loss %.5f over %d frames",
            iteration, record["sl_loss"], record["init_loss"], frames,
        )
        if log is not None:
            log.write(event, iteration, **record)
        done = iteration + 1
        if done % config.checkpoint_every == 0 or done == iterations:
            _save(agent, output_dir, SL_CHECKPOINT_NAME, rng, config_hash, done)
    return agent, history


@dataclass(eq=False)
class DynregEpisode:
    clip: str
    transitions: list = field(default_factory=list)
    states: list = field(default_factory=list)
    supervised: SupervisedEpisode = None
    fell: bool = False
    diverged: bool = False

    @property
    def length(self):
        return len(self.transitions)


def dynreg_rollout(agent, controller, clip, sim, rng=None, deterministic=False, threshold=None, start=None):
    """One episode of dynamics-regulated training.

    The simulator starts at rest on the initialization network's pose (or
    `start`). Every step builds the policy input from the simulated pose,
    integrates the sampled output into a kinematic target and lets the
    controller drive the simulation toward it. The episode ends when the
    simulated pose drifts past `threshold` from the ground truth or the
    simulation diverges.

    A controller whose `exact` attribute is true lands on the target itself;
    its mean-action episodes are recorded self-fed.
    """
    model = agent.model
    threshold = agent.config.termination_threshold if threshold is None else threshold
    context = SceneContext.from_clip(clip)
    velocities = clip.velocities
    start = agent.kin_init(context)[0] if start is None else start
    state = sim.reset(start, QVel.zeros(model.num_angles))
    hidden = agent.policy.initial_hidden()
    episode = DynregEpisode(clip=clip.name, states=[state])
    inputs, previous, targets = [], [], []

    for t in range(clip.num_frames - 1):
        target, action, log_prob, ppo_state, next_hidden = agent.step(context, t, state.q, hidden, rng, deterministic)
        value = agent.value(ppo_state)
        inputs.append(ppo_state[agent.policy.hidden:])
        previous.append(state.q)
        targets.append(clip.poses[t + 1])
        target_vel = finite_difference_velocity([state.q, target], DT)[0]
        try:
            state = controller.track(sim, state, target, target_vel, rng)
        except SimulationDivergedError as exc:
            logger.info("episode %s diverged at step %d (substep %d)", clip.name, t, exc.substep)
            episode.transitions.append(Transition(ppo_state, action, log_prob, 0.0, True, value))
            episode.diverged = episode.fell = True
            break
        sim.state = state

        reward, terms = kin_reward(
            model, state.q, state.qdot, clip.poses[t + 1], velocities[t + 1], target, clip.camera[t + 1]
        )
        fell = tracking_error(model, state.q, clip.poses[t + 1]) > threshold
        episode.transitions.append(Transition(ppo_state, action, log_prob, reward, fell, value, aux=terms))
        episode.states.append(state)
        hidden = next_hidden
        if fell:
            episode.fell = True
            break

    objects = _object_positions(context)
    self_fed = deterministic and getattr(controller, "exact", False)
    episode.supervised = SupervisedEpisode(
        clip=clip.name,
        inputs=np.stack(inputs),
        previous=previous,
        targets=targets,
        object_positions=None if objects is None else objects[:len(targets)],
        context=context if self_fed else None,
        start=start if self_fed else None,
    )
    return episode


def collect_dynreg_samples(agent, controller, clips, simulators, rng, num_samples, deterministic=False):
    """(TrajectoryBuffer, supervised episodes) of random windows until `num_samples` steps are stored."""
    buffer = TrajectoryBuffer(max(num_samples, 1))
    supervised = []
    while len(buffer) < num_samples:
        clip = sample_window(clips, rng, agent.config.episode_len)
        episode = dynreg_rollout(agent, controller, clip, simulators(clip), rng, deterministic)
        buffer.add_episode(episode.transitions)
        supervised.append(episode.supervised)
    return buffer, supervised


def collect_dynreg_worker(agent, controller, clips, scenes, sim_params, rng, num_samples):
    """Rollout worker with one simulator per scene."""
    cache = {}

    def simulators(clip):
        if clip.scene not in cache:
            cache[clip.scene] = Simulator(agent.model, (scenes or {}).get(clip.scene), sim_params)
        return cache[clip.scene]

    return collect_dynreg_samples(agent, controller, clips, simulators, rng, num_samples)


def train_dynamics_regulated(model, clips, controller, config=None, scenes=None, sim_params=None, output_dir=None,
                             log=None, config_hash="", progress=False, agent=None):
    """Dynamics-regulated training against a frozen controller.

    `scenes` maps scene names to Scene objects; clips whose scene is missing
    run in the empty scene. Worker w of iteration i draws from
    worker_rng(seed, i, w, DYNREG_STAGE); the stream after the last worker drives the PPO
    minibatches and the supervised epochs of both networks. The warm start
    draws from its own stage. Returns (agent, history).
    """
    if controller is None:
        raise MissingDependencyError("dynamics-regulated training needs a trained UHC checkpoint")
    clips = _training_clips(clips)
    config = config or KinConfig()
    if agent is None:
        agent = KinAgent.build(model, config, np.random.default_rng(config.seed))
        if config.warm_start:
            logger.info("warm start: %d supervised iterations", config.warm_start_epochs)
            train_supervised(model, clips, config, log=log, config_hash=config_hash, agent=agent,
                             iterations=config.warm_start_epochs, event="warm_start", stage=WARM_START_STAGE)
    budgets = [n for n in split_budget(config.batch_size, config.num_workers) if n > 0]
    history = []

    for iteration in trange(config.iterations, desc="train_kin_dynreg", disable=not progress, leave=False):
        payloads = [
            (agent, controller, clips, scenes, sim_params, worker_rng(config.seed, iteration, w, DYNREG_STAGE), n)
            for w, n in enumerate(budgets)
        ]
        results = run_workers(collect_dynreg_worker, payloads, config.num_workers)
        buffer = TrajectoryBuffer.merge([b for b, _ in results])
        episodes = [e for _, worker_episodes in results for e in worker_episodes][-config.sl_memory:]
        update_rng = worker_rng(config.seed, iteration, len(budgets), DYNREG_STAGE)
        stats = agent.learner.update(buffer, update_rng)
        losses = sl_update(agent, episodes, config.sl_epochs, update_rng)
        init_losses = init_update(agent, clips, config.sl_epochs, update_rng)

        record = {
            "mean_reward": buffer.mean_reward(),
            "episode_length": float(np.mean(buffer.episode_lengths())),
            "episodes": len(buffer.episodes),
            "sl_loss": losses[-1],
            "init_loss": init_losses[-1],
            **stats.as_dict(),
        }
        history.append(record)
        logger.info(
            "kin dynreg iteration %d: reward %.4f, episode length %.1f, policy loss %.5f, sl loss %.5f",
            iteration, record["mean_reward"], record["episode_length"], stats.policy_loss, record["sl_loss"],
        )
        if log is not None:
            log.write("train_kin_dynreg", iteration, **record)
        done = iteration + 1
        if done % config.checkpoint_every == 0 or done == config.iterations:
            _save(agent, output_dir, DYNREG_CHECKPOINT_NAME, update_rng, config_hash, done)
    return agent, history

