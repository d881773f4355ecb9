import numpy as np

from dynreg.exceptions import CheckpointError
from math_pose.models import QVel
from nn_rl_core.checkpoints import Checkpoint
from nn_rl_core.networks import MCPPolicy, ValueFunction
from nn_rl_core.ppo import PPOConfig, PPOLearner

from .actions import residual_action_to_pd_target
from .features import feature_size, uhc_features
from .models import UHCAction, UHCConfig


class UHCAgent:
    """MCP policy and value function of the controller, with their PPO optimizers."""

    def __init__(self, model, learner, config):
        self.model = model
        self.learner = learner
        self.config = config

    @classmethod
    def build(cls, model, config=None, rng=None):
        config = config or UHCConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        size = feature_size(model)
        policy = MCPPolicy(
            size, model.num_angles + 6, config.num_primitives, config.primitive_hidden, config.composer_hidden
        )
        value_fn = ValueFunction(size, config.value_hidden)
        learner = PPOLearner(
            policy,
            policy.init_params(rng, policy.initial_log_std(config.cov_std)),
            value_fn,
            value_fn.init_params(rng),
            cls.ppo_config(config),
        )
        return cls(model, learner, config)

    @staticmethod
    def ppo_config(config):
        return PPOConfig(
            clip_eps=config.clip_eps,
            gamma=config.gamma,
            gae_lambda=config.gae_lambda,
            policy_lr=config.policy_lr,
            value_lr=config.value_lr,
            epochs=config.ppo_epochs,
            minibatch_size=config.minibatch_size,
        )

    @property
    def policy_params(self):
        return self.learner.policy_params

    def features(self, state, target):
        return uhc_features(self.model, state.q, state.qdot, target)

    def act(self, features, rng=None, deterministic=False):
        """(UHCAction, log_prob, raw action vector)."""
        vector, log_prob, _ = self.learner.act(features, rng, deterministic)
        return UHCAction.from_vector(vector, self.model.num_angles), float(log_prob), vector

    def value(self, features):
        return float(self.learner.value(features))

    def control(self, target, action):
        return residual_action_to_pd_target(target, action, self.config.force_scale, self.config.torque_scale)

    def clip_values(self, clip):
        """V of starting at each frame j at rest, aiming for frame j + 1."""
        rest = QVel.zeros(self.model.num_angles)
        rows = [uhc_features(self.model, clip.poses[j], rest, clip.poses[j + 1]) for j in range(clip.num_frames - 1)]
        if not rows:
            return np.zeros(0)
        return np.atleast_1d(self.learner.value(np.stack(rows)))

    def track(self, sim, state, target, target_vel=None, rng=None):
        """One control step toward `target` with the mean action; returns the new SimState."""
        action, _, _ = self.act(self.features(state, target), rng, deterministic=True)
        return sim.step(state, self.control(target, action))

    def to_checkpoint(self, rng=None, config_hash="", extra=None):
        return Checkpoint(
            kind="uhc",
            networks={"policy": self.learner.policy_params, "value": self.learner.value_params},
            optimizers={
                "policy": self.learner.policy_optimizer.state(),
                "value": self.learner.value_optimizer.state(),
            },
            rng_state=rng.bit_generator.state if rng is not None else None,
            config_hash=config_hash,
            extra={"model": self.model.name, "uhc_config": _jsonable(self.config.as_dict()), **(extra or {})},
        )

    @classmethod
    def from_checkpoint(cls, checkpoint, model):
        if checkpoint.kind != "uhc":
            raise CheckpointError(f"expected a uhc checkpoint, got {checkpoint.kind!r}")
        if checkpoint.extra.get("model", model.name) != model.name:
            raise CheckpointError(
                f"checkpoint was trained on model {checkpoint.extra['model']!r}, not {model.name!r}"
            )
        config = UHCConfig.from_dict(checkpoint.extra.get("uhc_config", {}))
        agent = cls.build(model, config, np.random.default_rng(0))
        for name, params in (("policy", agent.learner.policy_params), ("value", agent.learner.value_params)):
            saved = checkpoint.network(name)
            if saved.shapes != params.shapes:
                raise CheckpointError(f"{name} network in checkpoint does not match model {model.name!r}")
        agent.learner.policy_params = checkpoint.network("policy")
        agent.learner.value_params = checkpoint.network("value")
        for name, optimizer in (("policy", agent.learner.policy_optimizer), ("value", agent.learner.value_optimizer)):
            if name in checkpoint.optimizers:
                optimizer.load_state(checkpoint.optimizers[name])
        return agent


class PlaybackController:
    """Stand-in controller that puts the simulator exactly on the target pose.

    No dynamics run; the state is injected with the target's velocity and the
    clock advances by one control step.
    """

    exact = True

    def track(self, sim, state, target, target_vel=None, rng=None):
        target_vel = target_vel if target_vel is not None else QVel.zeros(target.joint_angles.size)
        injected = sim.set_state(target, target_vel, object_poses=state.objects)
        sim.state = injected.replace(sim_time=state.sim_time + sim.params.control_dt)
        return sim.state


def _jsonable(values):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}
