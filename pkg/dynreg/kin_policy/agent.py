import numpy as np

from dynreg.exceptions import CheckpointError
from nn_rl_core.checkpoints import Checkpoint
from nn_rl_core.networks import ValueFunction
from nn_rl_core.optim import Adam
from nn_rl_core.ppo import PPOConfig, PPOLearner

from .context import init_input_size, init_inputs, pose_from_frame, step_input
from .integration import finite_integrate
from .models import KinConfig, KinStepInput
from .networks import KinInitNetwork, KinStepPolicy


def kin_init(network, params, context):
    """(first pose, per-frame features) regressed from the whole clip context."""
    inputs, frame = init_inputs(context)
    out, cache = network.forward(params, inputs)
    angles = network.num_angles
    pose = pose_from_frame(frame, out[:3], out[3:7], out[7:7 + angles])
    return pose, cache["hiddens"][::-1].copy()


class KinAgent:
    """Step policy, value function and initialization network of the kinematic policy.

    The step policy has two optimizers: the PPO learner's for reinforcement
    updates and `sl_optimizer` for supervised ones.
    """

    def __init__(self, model, config, learner, init_network, init_params):
        self.model = model
        self.config = config
        self.learner = learner
        self.init_network = init_network
        self.init_params = init_params
        self.sl_optimizer = Adam(learner.policy_params.size, config.sl_lr)
        self.init_optimizer = Adam(init_params.size, config.sl_lr)

    @classmethod
    def build(cls, model, config=None, rng=None):
        config = config or KinConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        step_size = KinStepInput.size(model.num_angles, config.phi_dim)
        policy = KinStepPolicy(step_size, model.num_angles, config.gru_hidden, config.mlp_hidden)
        value_fn = ValueFunction(policy.input_size, config.value_hidden)
        learner = PPOLearner(
            policy,
            policy.init_params(rng, policy.initial_log_std(config.cov_std)),
            value_fn,
            value_fn.init_params(rng),
            PPOConfig.for_kinematic_policy(
                clip_eps=config.clip_eps,
                gamma=config.gamma,
                gae_lambda=config.gae_lambda,
                policy_lr=config.policy_lr,
                value_lr=config.value_lr,
                epochs=config.rl_epochs,
                minibatch_size=config.minibatch_size,
            ),
        )
        init_network = KinInitNetwork(
            init_input_size(config.phi_dim), model.num_angles, config.init_gru_hidden, config.init_mlp_hidden
        )
        return cls(model, config, learner, init_network, init_network.init_params(rng))

    @property
    def policy(self):
        return self.learner.policy

    @property
    def policy_params(self):
        return self.learner.policy_params

    def kin_init(self, context):
        return kin_init(self.init_network, self.init_params, context)

    def step(self, context, t, q_t, hidden, rng=None, deterministic=False):
        """One policy step from q_t toward frame t + 1.

        Returns (next pose, action, log_prob, PPO state, next hidden).
        """
        x = step_input(context, t, q_t)
        action, log_prob, _, next_hidden = self.policy.act_step(self.policy_params, hidden, x, rng, deterministic)
        return finite_integrate(action, q_t), action, log_prob, self.policy.state(hidden, x), next_hidden

    def value(self, state):
        return float(self.learner.value(state))

    def to_checkpoint(self, rng=None, config_hash="", extra=None):
        return Checkpoint(
            kind="kin",
            networks={
                "step": self.learner.policy_params,
                "value": self.learner.value_params,
                "init": self.init_params,
            },
            optimizers={
                "policy": self.learner.policy_optimizer.state(),
                "value": self.learner.value_optimizer.state(),
                "sl": self.sl_optimizer.state(),
                "init": self.init_optimizer.state(),
            },
            rng_state=rng.bit_generator.state if rng is not None else None,
            config_hash=config_hash,
            extra={
                "model": self.model.name,
                "kin_config": {k: list(v) if isinstance(v, tuple) else v for k, v in self.config.as_dict().items()},
                **(extra or {}),
            },
        )

    @classmethod
    def from_checkpoint(cls, checkpoint, model):
        if checkpoint.kind != "kin":
            raise CheckpointError(f"expected a kin checkpoint, got {checkpoint.kind!r}")
        if checkpoint.extra.get("model", model.name) != model.name:
            raise CheckpointError(
                f"checkpoint was trained on model {checkpoint.extra['model']!r}, not {model.name!r}"
            )
        config = KinConfig.from_dict(checkpoint.extra.get("kin_config", {}))
        agent = cls.build(model, config, np.random.default_rng(0))
        current = {"step": agent.learner.policy_params, "value": agent.learner.value_params, "init": agent.init_params}
        for name, params in current.items():
            if checkpoint.network(name).shapes != params.shapes:
                raise CheckpointError(f"{name} network in checkpoint does not match model {model.name!r}")
        agent.learner.policy_params = checkpoint.network("step")
        agent.learner.value_params = checkpoint.network("value")
        agent.init_params = checkpoint.network("init")
        optimizers = {
            "policy": agent.learner.policy_optimizer,
            "value": agent.learner.value_optimizer,
            "sl": agent.sl_optimizer,
            "init": agent.init_optimizer,
        }
        for name, optimizer in optimizers.items():
            if name in checkpoint.optimizers:
                optimizer.load_state(checkpoint.optimizers[name])
        return agent
