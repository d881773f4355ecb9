"""Recurrent networks of the kinematic policy.

KinStepPolicy   GRU over step inputs, then an MLP to (ω, v, joint angles).
                PPO sees one step at a time: its state vector is the previous
                hidden state followed by the step input.
KinInitNetwork  GRU over the whole clip context, run last frame first, then an
                MLP regressing the first pose in the first camera frame.
"""

import numpy as np

from nn_rl_core.layers import gru_bptt, gru_init, gru_sequence, gru_shapes, gru_step, gru_step_backward
from nn_rl_core.layers import mlp_backward, mlp_forward, mlp_init, mlp_shapes
from nn_rl_core.networks import GaussianPolicyMixin, Network

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class KinStepPolicy(GaussianPolicyMixin, Network):
    def __init__(self, step_size, num_angles, hidden=256, mlp_hidden=(256, 128), activation="tanh"):
        self.step_size = int(step_size)
        self.hidden = int(hidden)
        self.num_angles = int(num_angles)
        self.mlp_sizes = [self.hidden, *mlp_hidden, 6 + self.num_angles]
        self.activation = activation
        self.input_size = self.hidden + self.step_size
        self.output_size = 6 + self.num_angles

    def shapes(self):
        return {**gru_shapes(self.step_size, self.hidden, "step_gru"), **mlp_shapes(self.mlp_sizes, "step_mlp")}

    def _initialize(self, params, rng):
        gru_init(params, self.step_size, self.hidden, rng, "step_gru")
        mlp_init(params, self.mlp_sizes, rng, "step_mlp")

    def initial_hidden(self):
        return np.zeros(self.hidden)

    def state(self, hidden, x):
        return np.concatenate([hidden, x], axis=-1)

    def forward(self, params, states):
        states = np.asarray(states, dtype=float)
        single = states.ndim == 1
        states = np.atleast_2d(states)
        hidden, gru_cache = gru_step(params, states[:, :self.hidden], states[:, self.hidden:], "step_gru")
        mean, mlp_cache = mlp_forward(params, hidden, "step_mlp", self.activation)
        cache = {"params": params, "gru": gru_cache, "mlp": mlp_cache, "hidden": hidden}
        return (mean[0] if single else mean), cache

    def backward(self, cache, grad_out):
        mlp_grads, grad_hidden = mlp_backward(cache["mlp"], np.atleast_2d(grad_out))
        gru_grads, _, _ = gru_step_backward(cache["gru"], grad_hidden)
        return cache["params"].pack({**mlp_grads, **gru_grads})

    def act_step(self, params, hidden, x, rng=None, deterministic=False):
        """(action, log_prob, mean, next hidden) for one step."""
        action, log_prob, mean = self.act(params, self.state(hidden, x), rng, deterministic)
        next_hidden, _ = gru_step(params, hidden, x, "step_gru")
        return action, float(log_prob), mean, next_hidden

    def step_forward(self, params, hidden, x):
        """(mean, next hidden, cache) of one step; the cache feeds step_backward."""
        next_hidden, gru_cache = gru_step(params, hidden, x, "step_gru")
        mean, mlp_cache = mlp_forward(params, next_hidden, "step_mlp", self.activation)
        return mean, next_hidden, {"gru": gru_cache, "mlp": mlp_cache}

    def step_backward(self, cache, grad_mean, grad_next_hidden):
        """({name: array}, d hidden, d input) of one step."""
        mlp_grads, grad_hidden = mlp_backward(cache["mlp"], grad_mean)
        gru_grads, grad_prev, grad_x = gru_step_backward(cache["gru"], grad_hidden + grad_next_hidden)
        return {**mlp_grads, **gru_grads}, grad_prev, grad_x

    def sequence(self, params, hidden, inputs):
        """Means over a (T, step) input sequence from `hidden`; the cache feeds sequence_backward."""
        hiddens, gru_caches = gru_sequence(params, hidden, np.asarray(inputs, dtype=float), "step_gru")
        means, mlp_cache = mlp_forward(params, hiddens, "step_mlp", self.activation)
        return means, {"params": params, "gru": gru_caches, "mlp": mlp_cache}

    def sequence_backward(self, cache, grad_means):
        """Flat gradient through the MLP and back through time."""
        mlp_grads, grad_hiddens = mlp_backward(cache["mlp"], grad_means)
        gru_grads, _, _ = gru_bptt(cache["gru"], grad_hiddens)
        return cache["params"].pack({**mlp_grads, **gru_grads})


class KinInitNetwork(Network):
    def __init__(self, context_size, num_angles, hidden=64, mlp_hidden=(64,), activation="tanh"):
        self.context_size = int(context_size)
        self.hidden = int(hidden)
        self.num_angles = int(num_angles)
        self.mlp_sizes = [self.hidden, *mlp_hidden, 7 + self.num_angles]
        self.activation = activation
        self.input_size, self.output_size = self.context_size, 7 + self.num_angles

    def shapes(self):
        return {**gru_shapes(self.context_size, self.hidden, "init_gru"), **mlp_shapes(self.mlp_sizes, "init_mlp")}

    def _initialize(self, params, rng):
        gru_init(params, self.context_size, self.hidden, rng, "init_gru")
        mlp_init(params, self.mlp_sizes, rng, "init_mlp")

    def forward(self, params, inputs):
        """Raw (position, quaternion, angles) vector; the quaternion slot is offset by the identity."""
        inputs = np.asarray(inputs, dtype=float)
        hiddens, gru_caches = gru_sequence(params, np.zeros(self.hidden), inputs[::-1], "init_gru")
        out, mlp_cache = mlp_forward(params, hiddens[-1], "init_mlp", self.activation)
        out = out.copy()
        out[3:7] += IDENTITY_QUAT
        cache = {"params": params, "gru": gru_caches, "mlp": mlp_cache, "hiddens": hiddens}
        return out, cache

    def features(self, params, inputs):
        """Per-frame hidden states in frame order."""
        _, cache = self.forward(params, inputs)
        return cache["hiddens"][::-1]

    def backward(self, cache, grad_out):
        mlp_grads, grad_last = mlp_backward(cache["mlp"], grad_out)
        grad_hiddens = np.zeros((len(cache["gru"]), self.hidden))
        grad_hiddens[-1] = grad_last
        gru_grads, _, _ = gru_bptt(cache["gru"], grad_hiddens)
        return cache["params"].pack({**mlp_grads, **gru_grads})
