import logging
from pathlib import Path

import numpy as np
from tqdm import trange

from nn_rl_core.checkpoints import save_checkpoint
from nn_rl_core.models import TrajectoryBuffer
from nn_rl_core.parallel import run_workers, split_budget, worker_rng

from .agent import UHCAgent
from .evaluation import imitation_eval
from .models import UHCConfig
from .rollout import collect_worker
from .sampling import ValueGuidedSampler

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "uhc.npz"


def train_uhc(model, clips, config=None, scene=None, sim_params=None, output_dir=None, log=None,
              config_hash="", progress=False, agent=None, start_iteration=0, eval_clips=None):
    """PPO training of the controller on a motion dataset.

    Every iteration rescores all start frames, collects `batch_size` samples
    spread over the workers and runs one PPO update on the merged buffer.
    Worker w of iteration i draws from worker_rng(seed, i, w); the stream
    after the last worker shuffles the minibatches. Returns (agent, history).
    """
    config = config or UHCConfig()
    agent = agent or UHCAgent.build(model, config, np.random.default_rng(config.seed))
    sampler = ValueGuidedSampler(clips, config.temperature, config.episode_len)
    budgets = [n for n in split_budget(config.batch_size, config.num_workers) if n > 0]
    output_dir = Path(output_dir) if output_dir is not None else None
    history = []

    iterations = trange(
        start_iteration, config.iterations, desc="train_uhc", disable=not progress, leave=False
    )
    for iteration in iterations:
        sampler.refresh(agent.clip_values)
        payloads = [
            (agent, sampler, scene, sim_params, worker_rng(config.seed, iteration, w), n)
            for w, n in enumerate(budgets)
        ]
        buffer = TrajectoryBuffer.merge(run_workers(collect_worker, payloads, config.num_workers))
        update_rng = worker_rng(config.seed, iteration, len(budgets))
        stats = agent.learner.update(buffer, update_rng)

        record = {
            "mean_reward": buffer.mean_reward(),
            "episode_length": float(np.mean(buffer.episode_lengths())),
            "episodes": len(buffer.episodes),
            **stats.as_dict(),
        }
        history.append(record)
        logger.info(
            "uhc iteration %d: reward %.4f, episode length %.1f, policy loss %.5f, value loss %.5f",
            iteration, record["mean_reward"], record["episode_length"], stats.policy_loss, stats.value_loss,
        )
        if log is not None:
            log.write("train_uhc", iteration, **record)

        done = iteration + 1
        if done % config.checkpoint_every == 0 or done == config.iterations:
            if eval_clips:
                report = imitation_eval(agent, model, eval_clips, scene, sim_params, config.termination_threshold)
                if log is not None:
                    log.write("eval", iteration, **report.aggregate())
            if output_dir is not None:
                checkpoint = agent.to_checkpoint(update_rng, config_hash, extra={"iteration": done})
                save_checkpoint(output_dir / CHECKPOINT_NAME, checkpoint)
    return agent, history
