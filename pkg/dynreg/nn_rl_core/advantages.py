import numpy as np

from dynreg.exceptions import EmptyBufferError


def gae(rewards, values, dones, bootstrap_value, gamma, lambda_gae):
    """GAE(λ) over one episode; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    advantages = np.zeros_like(rewards)
    next_value, running = float(bootstrap_value), 0.0
    for t in reversed(range(rewards.size)):
        alive = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * alive - values[t]
        running = delta + gamma * lambda_gae * alive * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


def normalize(advantages):
    advantages = np.asarray(advantages, dtype=float)
    centered = advantages - advantages.mean()
    std = centered.std()
    return centered / std if std > 1e-12 else centered


def compute_advantages(buffer, gamma, lambda_gae, normalized=True):
    """Advantages and returns for every finished episode of the buffer, in buffer order."""
    if not buffer.episodes:
        raise EmptyBufferError("cannot compute advantages of an empty buffer")
    advantages, returns = [], []
    for episode, bootstrap in zip(buffer.episodes, buffer.bootstrap):
        adv, ret = gae(
            [t.reward for t in episode],
            [t.value for t in episode],
            [t.done for t in episode],
            bootstrap,
            gamma,
            lambda_gae,
        )
        advantages.append(adv)
        returns.append(ret)
    advantages = np.concatenate(advantages)
    return (normalize(advantages) if normalized else advantages), np.concatenate(returns)
