"""Networks built from the layers module.

Every network exposes the same small surface:
  shapes()                      parameter block shapes
  init_params(rng)              seeded PolicyParams
  forward(params, x)            (output, cache)
  backward(cache, grad_out)     flat gradient aligned with params.flat
Policies add `act` and carry their fixed log-std inside PolicyParams.
"""

import numpy as np

from .distributions import gaussian_log_prob, gaussian_sample, mcp_compose, mcp_compose_backward
from .layers import mlp_backward, mlp_forward, mlp_init, mlp_shapes
from .models import PolicyParams


class Network:
    input_size = 0
    output_size = 0

    def shapes(self):
        raise NotImplementedError

    def _initialize(self, params, rng):
        raise NotImplementedError

    def init_params(self, rng, log_std=()):
        params = PolicyParams.zeros(self.shapes(), log_std)
        self._initialize(params, rng)
        return params

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, cache, grad_out):
        raise NotImplementedError

    def __call__(self, params, x):
        return self.forward(params, x)[0]


class MLPNetwork(Network):
    def __init__(self, sizes, activation="tanh", output_activation=None, prefix="mlp", output_gain=0.01):
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.output_activation = output_activation
        self.prefix = prefix
        self.output_gain = output_gain
        self.input_size, self.output_size = self.sizes[0], self.sizes[-1]

    def shapes(self):
        return mlp_shapes(self.sizes, self.prefix)

    def _initialize(self, params, rng):
        mlp_init(params, self.sizes, rng, self.prefix, self.output_gain)

    def forward(self, params, x):
        return mlp_forward(params, x, self.prefix, self.activation, self.output_activation)

    def backward(self, cache, grad_out):
        grads, _ = mlp_backward(cache, grad_out)
        return cache["params"].pack(grads)


class ValueFunction(MLPNetwork):
    """State-value MLP with a scalar head."""

    def __init__(self, input_size, hidden=(64, 64), activation="tanh"):
        super().__init__([input_size, *hidden, 1], activation, prefix="value", output_gain=1.0)

    def forward(self, params, x):
        out, cache = super().forward(params, x)
        return out[..., 0], cache

    def backward(self, cache, grad_out):
        return super().backward(cache, np.asarray(grad_out, dtype=float)[..., None])


class GaussianPolicyMixin:
    """Gaussian action head with a fixed diagonal covariance."""

    def initial_log_std(self, std):
        return np.full(self.output_size, np.log(std))

    def act(self, params, x, rng=None, deterministic=False):
        """(action, log_prob, mean); the mean itself when deterministic."""
        mean, _ = self.forward(params, x)
        action = mean if deterministic or rng is None else gaussian_sample(mean, params.log_std, rng)
        return action, gaussian_log_prob(mean, params.log_std, action), mean


class GaussianMLPPolicy(GaussianPolicyMixin, MLPNetwork):
    def __init__(self, input_size, action_size, hidden=(64, 64), activation="tanh"):
        super().__init__([input_size, *hidden, action_size], activation, prefix="policy")


class MCPPolicy(GaussianPolicyMixin, Network):
    """Multiplicative compositional policy.

    `num_primitives` MLPs each propose a mean; a composer MLP with sigmoid
    outputs weighs them and mcp_compose combines the proposals.
    """

    def __init__(self, input_size, action_size, num_primitives=8, primitive_hidden=(512, 256),
                 composer_hidden=(300, 200), activation="tanh"):
        self.input_size, self.output_size = int(input_size), int(action_size)
        self.primitives = [
            MLPNetwork([input_size, *primitive_hidden, action_size], activation, prefix=f"primitive{i}")
            for i in range(num_primitives)
        ]
        self.composer = MLPNetwork(
            [input_size, *composer_hidden, num_primitives], activation, "sigmoid", prefix="composer", output_gain=1.0
        )

    @property
    def num_primitives(self):
        return len(self.primitives)

    def shapes(self):
        shapes = {}
        for primitive in self.primitives:
            shapes.update(primitive.shapes())
        shapes.update(self.composer.shapes())
        return shapes

    def _initialize(self, params, rng):
        for primitive in self.primitives:
            primitive._initialize(params, rng)
        self.composer._initialize(params, rng)

    def forward(self, params, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        proposals = [p.forward(params, x) for p in self.primitives]
        means = np.stack([out for out, _ in proposals], axis=1)
        weights, composer_cache = self.composer.forward(params, x)
        mean, _ = mcp_compose(means, weights)
        cache = {
            "params": params,
            "means": means,
            "weights": weights,
            "primitive_caches": [c for _, c in proposals],
            "composer_cache": composer_cache,
            "single": single,
        }
        return (mean[0] if single else mean), cache

    def backward(self, cache, grad_out):
        grad_out = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grad_means, grad_weights = mcp_compose_backward(cache["means"], cache["weights"], grad_out)
        params = cache["params"]
        flat = np.zeros_like(params.flat)
        for i, primitive_cache in enumerate(cache["primitive_caches"]):
            grads, _ = mlp_backward(primitive_cache, grad_means[:, i])
            flat += params.pack(grads)
        grads, _ = mlp_backward(cache["composer_cache"], grad_weights)
        return flat + params.pack(grads)
