import logging
from dataclasses import asdict, dataclass

import numpy as np
from django.conf import settings

from dynreg.exceptions import EmptyBufferError, NonFiniteLossError

from .advantages import compute_advantages
from .distributions import gaussian_log_prob, gaussian_log_prob_grad_mean
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    clip_eps: float = settings.UHC_CLIP_EPS
    gamma: float = settings.UHC_GAMMA
    gae_lambda: float = settings.UHC_GAE_LAMBDA
    policy_lr: float = settings.UHC_POLICY_LR
    value_lr: float = settings.UHC_VALUE_LR
    epochs: int = settings.UHC_PPO_EPOCHS
    minibatch_size: int = settings.UHC_MINIBATCH_SIZE
    max_grad_norm: float = None

    @classmethod
    def for_kinematic_policy(cls, **overrides):
        values = dict(
            clip_eps=settings.KIN_CLIP_EPS,
            gamma=settings.KIN_GAMMA,
            gae_lambda=settings.KIN_GAE_LAMBDA,
            policy_lr=settings.KIN_POLICY_LR,
            value_lr=settings.KIN_VALUE_LR,
            epochs=settings.KIN_RL_EPOCHS,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class PPOStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    initial_ratio_error: float = 0.0
    mean_advantage: float = 0.0
    samples: int = 0

    def as_dict(self):
        return asdict(self)


def clipped_surrogate(ratio, advantages, clip_eps):
    """Per-sample min(ρA, clip(ρ, 1−ε, 1+ε)A) and its derivative in ρ."""
    ratio = np.asarray(ratio, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    objective = np.minimum(unclipped, clipped)
    # the gradient flows only where the unclipped term is the active minimum
    active = unclipped <= clipped
    return objective, np.where(active, advantages, 0.0)


class PPOLearner:
    """Policy and value function with their optimizers; `update` runs one PPO round."""

    def __init__(self, policy, policy_params, value_fn, value_params, config=None):
        self.policy = policy
        self.policy_params = policy_params
        self.value_fn = value_fn
        self.value_params = value_params
        self.config = config or PPOConfig()
        self.policy_optimizer = Adam(policy_params.size, self.config.policy_lr, max_grad_norm=self.config.max_grad_norm)
        self.value_optimizer = Adam(value_params.size, self.config.value_lr, max_grad_norm=self.config.max_grad_norm)

    def value(self, states):
        return self.value_fn(self.value_params, states)

    def act(self, state, rng=None, deterministic=False):
        return self.policy.act(self.policy_params, state, rng, deterministic)

    def update(self, buffer, rng, advantages=None, returns=None):
        return ppo_update(buffer, self, rng, advantages, returns)


def _check_finite(name, value, diagnostics):
    if not np.isfinite(value):
        diagnostics = dict(diagnostics, **{name: float(value)})
        raise NonFiniteLossError(f"non-finite {name} during PPO update", diagnostics)


def ppo_update(buffer, learner, rng, advantages=None, returns=None):
    """Clipped-surrogate policy epochs and squared-error value epochs over one buffer."""
    if len(buffer.transitions()) == 0:
        raise EmptyBufferError("PPO update on an empty buffer")
    config = learner.config
    states, actions, old_log_probs, _, _, _ = buffer.arrays()
    if advantages is None or returns is None:
        advantages, returns = compute_advantages(buffer, config.gamma, config.gae_lambda)

    policy, params = learner.policy, learner.policy_params
    value_fn, value_params = learner.value_fn, learner.value_params
    count = states.shape[0]
    batch = max(1, min(config.minibatch_size, count))
    stats = PPOStats(samples=count, mean_advantage=float(np.mean(advantages)))

    mean, _ = policy.forward(params, states)
    initial_ratio = np.exp(gaussian_log_prob(mean, params.log_std, actions) - old_log_probs)
    stats.initial_ratio_error = float(np.max(np.abs(initial_ratio - 1.0)))

    policy_losses, value_losses, clipped_counts, kls = [], [], 0, []
    for epoch in range(config.epochs):
        order = rng.permutation(count)
        for start in range(0, count, batch):
            idx = order[start:start + batch]
            diagnostics = {"epoch": epoch, "minibatch": start // batch}

            mean, cache = policy.forward(params, states[idx])
            log_probs = gaussian_log_prob(mean, params.log_std, actions[idx])
            log_ratio = log_probs - old_log_probs[idx]
            ratio = np.exp(log_ratio)
            objective, d_ratio = clipped_surrogate(ratio, advantages[idx], config.clip_eps)
            policy_loss = -float(np.mean(objective))
            _check_finite("policy_loss", policy_loss, dict(diagnostics, max_ratio=float(np.max(ratio))))

            grad_log_prob = -d_ratio * ratio / idx.size
            grad_mean = grad_log_prob[:, None] * gaussian_log_prob_grad_mean(mean, params.log_std, actions[idx])
            policy_grad = policy.backward(cache, grad_mean)
            _check_finite("policy_grad_norm", np.linalg.norm(policy_grad), diagnostics)
            learner.policy_optimizer.step(params, policy_grad)

            values, value_cache = value_fn.forward(value_params, states[idx])
            error = values - returns[idx]
            value_loss = 0.5 * float(np.mean(error**2))
            _check_finite("value_loss", value_loss, diagnostics)
            learner.value_optimizer.step(value_params, value_fn.backward(value_cache, error / idx.size))

            policy_losses.append(policy_loss)
            value_losses.append(value_loss)
            clipped_counts += int(np.sum(np.abs(ratio - 1.0) > config.clip_eps))
            kls.append(float(np.mean(ratio - 1.0 - log_ratio)))

    stats.policy_loss = float(np.mean(policy_losses))
    stats.value_loss = float(np.mean(value_losses))
    stats.clip_fraction = clipped_counts / float(count * config.epochs)
    stats.approx_kl = float(np.mean(kls))
    logger.debug(
        "ppo update: %d samples, policy loss %.5f, value loss %.5f, clip fraction %.3f",
        count, stats.policy_loss, stats.value_loss, stats.clip_fraction,
    )
    return stats
