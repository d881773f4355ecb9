import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given
from hypothesis import strategies as st

from dynreg.exceptions import (
    CheckpointCorruptError,
    CheckpointVersionError,
    DegenerateComposerError,
    DomainError,
    EmptyBufferError,
    NonFiniteLossError,
    ShapeError,
)
from nn_rl_core.advantages import compute_advantages, gae, normalize
from nn_rl_core.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from nn_rl_core.distributions import gaussian_log_prob, mcp_compose
from nn_rl_core.envs import PendulumImitation, collect
from nn_rl_core.layers import gru_bptt, gru_sequence, gru_shapes, gru_step, mlp_backward, mlp_forward, mlp_shapes
from nn_rl_core.models import PolicyParams, Transition, TrajectoryBuffer
from nn_rl_core.networks import GaussianMLPPolicy, MCPPolicy, MLPNetwork, ValueFunction
from nn_rl_core.optim import Adam, adam_step
from nn_rl_core.parallel import worker_rng
from nn_rl_core.ppo import PPOConfig, PPOLearner, clipped_surrogate, ppo_update

from .utils import slow


def random_params(shapes, rng, scale=0.5):
    params = PolicyParams.zeros(shapes)
    params.flat[...] = rng.normal(scale=scale, size=params.size)
    return params


def finite_difference_errors(loss, params, analytic, rng, samples=100, eps=1e-6):
    """Relative errors between analytic and central-difference gradients at random coordinates."""
    errors = []
    for index in rng.choice(params.size, size=min(samples, params.size), replace=False):
        saved = params.flat[index]
        params.flat[index] = saved + eps
        up = loss()
        params.flat[index] = saved - eps
        down = loss()
        params.flat[index] = saved
        numeric = (up - down) / (2 * eps)
        errors.append(abs(numeric - analytic[index]) / max(abs(numeric) + abs(analytic[index]), 1e-7))
    return np.array(errors)


def transition(reward, value=0.0, done=False):
    return Transition(np.zeros(2), np.zeros(1), 0.0, reward, done, value)


class PolicyParamsTest(SimpleTestCase):
    def test_views_share_storage(self):
        params = PolicyParams.zeros({"a.w": (2, 3), "a.b": (3,)})
        params.view("a.w")[1, 2] = 7.0
        self.assertEqual(params.flat[5], 7.0)
        self.assertEqual(set(params.views("a")), {"w", "b"})

    def test_size_must_match_shapes(self):
        with self.assertRaises(ShapeError):
            PolicyParams({"w": (2, 2)}, np.zeros(5))

    def test_pack(self):
        params = PolicyParams.zeros({"w": (2,), "b": (1,)})
        self.assertEqual(params.pack({"b": [3.0]}).tolist(), [0.0, 0.0, 3.0])


class MLPTest(SimpleTestCase):
    def test_zero_weights_give_zero_output(self):
        params = PolicyParams.zeros(mlp_shapes([5, 7, 3]))
        out, _ = mlp_forward(params, np.random.default_rng(0).normal(size=(4, 5)))
        self.assertEqual(np.abs(out).max(), 0.0)

    def test_identity_layer(self):
        params = PolicyParams.zeros(mlp_shapes([4, 4]))
        params.view("mlp.w0")[...] = np.eye(4)
        x = np.array([0.5, -1.0, 2.0, 3.5])
        out, _ = mlp_forward(params, x)
        self.assertEqual(out.tolist(), x.tolist())

    def test_wrong_input_width(self):
        params = PolicyParams.zeros(mlp_shapes([4, 2]))
        with self.assertRaises(ShapeError):
            mlp_forward(params, np.zeros(5))

    def test_gradient_check(self):
        rng = np.random.default_rng(1)
        params = random_params(mlp_shapes([8, 16, 4]), rng)
        x = rng.normal(size=(3, 8))
        weights = rng.normal(size=(3, 4))

        def loss():
            return float(np.sum(mlp_forward(params, x)[0] * weights))

        out, cache = mlp_forward(params, x)
        grads, grad_x = mlp_backward(cache, weights)
        errors = finite_difference_errors(loss, params, params.pack(grads), rng)
        self.assertLess(errors.max(), 1e-4)

        eps = 1e-6
        shifted = x.copy()
        shifted[1, 3] += eps
        numeric = (np.sum(mlp_forward(params, shifted)[0] * weights) - loss()) / eps
        self.assertAlmostEqual(grad_x[1, 3], numeric, places=4)


class GRUTest(SimpleTestCase):
    def test_zero_stays_zero(self):
        params = PolicyParams.zeros(gru_shapes(3, 4))
        hidden, _ = gru_step(params, np.zeros(4), np.zeros(3))
        self.assertEqual(hidden.tolist(), [0.0] * 4)

    def test_closed_update_gate_keeps_hidden(self):
        rng = np.random.default_rng(2)
        params = random_params(gru_shapes(3, 4), rng)
        params.view("gru.bz")[...] = -60.0
        hidden = rng.normal(size=4)
        for _ in range(3):
            new, _ = gru_step(params, hidden, rng.normal(size=3) * 5)
            self.assertTrue(np.allclose(new, hidden, atol=1e-12))

    def test_batch_mismatch(self):
        params = PolicyParams.zeros(gru_shapes(3, 4))
        with self.assertRaises(ShapeError):
            gru_step(params, np.zeros((2, 4)), np.zeros((3, 3)))

    def test_bptt_gradient_check(self):
        rng = np.random.default_rng(3)
        params = random_params(gru_shapes(3, 5), rng)
        h0 = rng.normal(size=5)
        inputs = rng.normal(size=(5, 3))
        weights = rng.normal(size=(5, 5))

        def loss():
            hiddens, _ = gru_sequence(params, h0, inputs)
            return float(np.sum(hiddens * weights))

        _, caches = gru_sequence(params, h0, inputs)
        grads, grad_h0, grad_inputs = gru_bptt(caches, weights)
        errors = finite_difference_errors(loss, params, params.pack(grads), rng)
        self.assertLess(errors.max(), 1e-4)

        eps = 1e-6
        bumped = h0.copy()
        bumped[2] += eps
        hiddens, _ = gru_sequence(params, bumped, inputs)
        self.assertAlmostEqual(grad_h0[2], (np.sum(hiddens * weights) - loss()) / eps, places=4)
        self.assertEqual(grad_inputs.shape, inputs.shape)


class DistributionsTest(SimpleTestCase):
    def test_standard_normal_at_mean(self):
        self.assertAlmostEqual(gaussian_log_prob([0.0], [0.0], [0.0]), -0.91894, places=5)

    @given(st.floats(min_value=-4, max_value=4), st.floats(min_value=-2, max_value=1))
    def test_shift_by_k_sigma(self, k, log_std):
        at_mean = gaussian_log_prob([1.0], [log_std], [1.0])
        shifted = gaussian_log_prob([1.0], [log_std], [1.0 + k * np.exp(log_std)])
        self.assertAlmostEqual(at_mean - shifted, k * k / 2, places=9)

    def test_density_integrates_to_one(self):
        grid = np.linspace(-3.0, 5.0, 20001)
        density = np.exp(gaussian_log_prob(np.full((grid.size, 1), 1.0), [np.log(0.4)], grid[:, None]))
        self.assertAlmostEqual(np.trapezoid(density, grid), 1.0, places=6)

    def test_dimensions_add(self):
        rng = np.random.default_rng(4)
        mean, log_std, action = rng.normal(size=3), rng.normal(size=3) * 0.3, rng.normal(size=3)
        separate = sum(gaussian_log_prob(mean[i:i + 1], log_std[i:i + 1], action[i:i + 1]) for i in range(3))
        self.assertAlmostEqual(gaussian_log_prob(mean, log_std, action), separate, places=12)

    def test_one_hot_composer(self):
        means = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        mean, std = mcp_compose(means, np.array([0.0, 1.0, 0.0]), 0.1)
        self.assertEqual(mean.tolist(), [3.0, 4.0])
        self.assertEqual(std, 0.1)

    def test_equal_weights_average(self):
        mean, _ = mcp_compose(np.array([[1.0, -2.0], [3.0, 4.0]]), np.array([0.7, 0.7]))
        self.assertTrue(np.allclose(mean, [2.0, 1.0]))

    def test_rescaling_weights(self):
        rng = np.random.default_rng(5)
        means, weights = rng.normal(size=(8, 6)), rng.uniform(0.1, 1.0, size=8)
        base, _ = mcp_compose(means, weights)
        self.assertTrue(np.array_equal(mcp_compose(means, 4.0 * weights)[0], base))
        self.assertTrue(np.allclose(mcp_compose(means, 3.7 * weights)[0], base, atol=1e-14))

    def test_degenerate_composer(self):
        with self.assertRaises(DegenerateComposerError):
            mcp_compose(np.ones((3, 2)), np.zeros(3))
        with self.assertRaises(DegenerateComposerError):
            mcp_compose(np.ones((2, 2)), np.array([1.0, -0.5]))


class NetworkGradientTest(SimpleTestCase):
    def check(self, network, x, seed):
        rng = np.random.default_rng(seed)
        params = network.init_params(rng)
        params.flat[...] += rng.normal(scale=0.3, size=params.size)
        out, cache = network.forward(params, x)
        weights = rng.normal(size=np.shape(out))

        def loss():
            return float(np.sum(network.forward(params, x)[0] * weights))

        errors = finite_difference_errors(loss, params, network.backward(cache, weights), rng)
        self.assertLess(errors.max(), 1e-4)

    def test_mcp_policy(self):
        network = MCPPolicy(4, 2, num_primitives=3, primitive_hidden=(6,), composer_hidden=(5,))
        self.check(network, np.random.default_rng(6).normal(size=(3, 4)), 6)

    def test_value_function(self):
        self.check(ValueFunction(4, hidden=(6, 5)), np.random.default_rng(7).normal(size=(5, 4)), 7)

    def test_mlp_network_single_sample(self):
        self.check(MLPNetwork([3, 4, 2]), np.array([0.2, -0.1, 0.4]), 8)

    def test_mcp_sizes(self):
        network = MCPPolicy(640, 75)
        shapes = network.shapes()
        self.assertEqual(network.num_primitives, 8)
        self.assertEqual(shapes["primitive0.w0"], (640, 512))
        self.assertEqual(shapes["composer.w2"], (200, 8))


class AdamTest(SimpleTestCase):
    def test_zero_gradient(self):
        params = np.array([1.0, -2.0, 3.0])
        new, _, _ = adam_step(params, np.zeros(3), np.zeros(3), np.zeros(3), 1, 1e-3)
        self.assertEqual(new.tolist(), params.tolist())

    def test_first_step_bound(self):
        grads = np.array([1e-3, -5.0, 200.0])
        new, _, _ = adam_step(np.zeros(3), grads, np.zeros(3), np.zeros(3), 1, 0.01)
        self.assertTrue(np.all(np.abs(new) <= 0.01 * (1 + 1e-6)))
        self.assertTrue(np.array_equal(np.sign(new), -np.sign(grads)))

    def test_deterministic_and_in_place(self):
        results = []
        for _ in range(2):
            params = PolicyParams.zeros({"w": (4,)})
            optimizer = Adam(4, 0.1)
            for g in np.random.default_rng(9).normal(size=(5, 4)):
                optimizer.step(params, g)
            results.append(params.flat.copy())
        self.assertTrue(np.array_equal(*results))
        self.assertEqual(optimizer.t, 5)

    def test_gradient_clipping(self):
        params = PolicyParams.zeros({"w": (2,)})
        optimizer = Adam(2, 0.1, max_grad_norm=1.0)
        optimizer.step(params, np.array([30.0, 40.0]))
        self.assertTrue(np.allclose(optimizer.m, 0.1 * np.array([0.6, 0.8])))


class AdvantagesTest(SimpleTestCase):
    def test_zero_discount(self):
        advantages, returns = gae([1.0, 1.0, 1.0], [0.3, -0.2, 5.0], [False, False, True], 0.0, 0.0, 0.7)
        self.assertTrue(np.allclose(returns, 1.0))

    def test_lambda_one_is_monte_carlo(self):
        advantages, returns = gae([1.0, 2.0, 3.0], [0.5, 0.5, 0.5], [False, False, True], 9.0, 0.9, 1.0)
        self.assertTrue(np.allclose(returns, [5.23, 4.7, 3.0]))
        self.assertTrue(np.allclose(advantages, [4.73, 4.2, 2.5]))

    def test_truncated_episode_bootstraps(self):
        _, returns = gae([1.0], [0.0], [False], 10.0, 0.5, 0.95)
        self.assertAlmostEqual(returns[0], 6.0)

    def test_normalization(self):
        values = normalize(np.random.default_rng(10).exponential(size=257))
        self.assertLess(abs(values.mean()), 1e-9)
        self.assertAlmostEqual(values.var(), 1.0, delta=1e-6)

    def test_buffer_episodes_are_independent(self):
        buffer = TrajectoryBuffer(10)
        buffer.add_episode([transition(1.0), transition(1.0, done=True)])
        buffer.add_episode([transition(2.0)], bootstrap_value=4.0)
        _, returns = compute_advantages(buffer, 0.5, 1.0, normalized=False)
        self.assertTrue(np.allclose(returns, [1.5, 1.0, 4.0]))

    def test_empty(self):
        with self.assertRaises(EmptyBufferError):
            compute_advantages(TrajectoryBuffer(4), 0.95, 0.95)


class BufferTest(SimpleTestCase):
    def test_capacity_and_merge(self):
        first, second = TrajectoryBuffer(3), TrajectoryBuffer(3)
        first.add_episode([transition(1.0), transition(2.0, done=True)])
        second.add_episode([transition(3.0)], bootstrap_value=1.5)
        self.assertFalse(first.is_full)
        merged = TrajectoryBuffer.merge([first, second])
        self.assertEqual(merged.capacity, 6)
        self.assertEqual([t.reward for t in merged.transitions()], [1.0, 2.0, 3.0])
        self.assertEqual(merged.bootstrap, [0.0, 1.5])
        self.assertEqual(merged.episode_lengths(), [2, 1])
        self.assertAlmostEqual(merged.mean_reward(), 2.0)

    def test_no_episode_starts_past_capacity(self):
        buffer = TrajectoryBuffer(2)
        buffer.add_episode([transition(1.0), transition(1.0), transition(1.0, done=True)])
        self.assertTrue(buffer.is_full)
        self.assertEqual(len(buffer), 3)
        with self.assertRaises(DomainError):
            buffer.add(transition(2.0))

    def test_non_finite_transition(self):
        with self.assertRaises(DomainError):
            Transition([np.nan], [0.0], 0.0, 1.0, False, 0.0)

    def test_empty_arrays(self):
        with self.assertRaises(EmptyBufferError):
            TrajectoryBuffer(2).arrays()


class WorkerStreamTest(SimpleTestCase):
    def test_stages_draw_distinct_streams(self):
        draws = [worker_rng(0, 0, 0, stage).random() for stage in range(4)]
        self.assertEqual(len(set(draws)), 4)
        self.assertEqual(worker_rng(0, 1, 2, 3).random(), worker_rng(0, 1, 2, 3).random())
        self.assertNotEqual(worker_rng(0, 1, 2).random(), worker_rng(0, 2, 1).random())


class CollectTest(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)
        env = PendulumImitation()
        policy = GaussianMLPPolicy(env.observation_size, env.action_size, hidden=(8,))
        value_fn = ValueFunction(env.observation_size, hidden=(8,))
        self.learner = PPOLearner(
            policy, policy.init_params(self.rng, policy.initial_log_std(0.1)), value_fn,
            value_fn.init_params(self.rng), PPOConfig(),
        )

    def test_single_step_episodes(self):
        buffer = collect(PendulumImitation(episode_len=1), self.learner, self.rng, 3)
        self.assertEqual(buffer.episode_lengths(), [1, 1, 1])

    def test_empty_episodes_refused(self):
        with self.assertRaises(DomainError):
            PendulumImitation(episode_len=0)


class PPOTest(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12)
        self.policy = GaussianMLPPolicy(1, 1, hidden=(8,))
        self.value_fn = ValueFunction(1, hidden=(8,))
        config = PPOConfig(clip_eps=0.2, gamma=0.0, gae_lambda=0.95, policy_lr=0.02, value_lr=0.01,
                           epochs=5, minibatch_size=256)
        self.learner = PPOLearner(
            self.policy,
            self.policy.init_params(self.rng, self.policy.initial_log_std(0.5)),
            self.value_fn,
            self.value_fn.init_params(self.rng),
            config,
        )

    def bandit_buffer(self, samples=1024, target=1.0):
        buffer = TrajectoryBuffer(samples)
        obs = np.ones(1)
        for _ in range(samples):
            action, log_prob, _ = self.learner.act(obs, self.rng)
            reward = float(np.exp(-((action[0] - target) ** 2)))
            buffer.add_episode([Transition(obs, action, log_prob, reward, True, float(self.learner.value(obs)))])
        return buffer

    def test_surrogate_examples(self):
        objective, _ = clipped_surrogate(np.ones(4), np.array([1.0, -2.0, 0.5, 3.0]), 0.2)
        self.assertAlmostEqual(objective.mean(), 0.625)
        objective, grad = clipped_surrogate([1.5], [1.0], 0.2)
        self.assertAlmostEqual(objective[0], 1.2)
        self.assertEqual(grad[0], 0.0)
        objective, grad = clipped_surrogate([0.5], [-1.0], 0.2)
        self.assertAlmostEqual(objective[0], -0.8)

    def test_ratio_starts_at_one(self):
        stats = self.learner.update(self.bandit_buffer(), self.rng)
        self.assertLess(stats.initial_ratio_error, 1e-9)
        self.assertEqual(stats.samples, 1024)

    def test_mean_moves_toward_rewarded_action(self):
        obs = np.ones(1)
        before = abs(self.learner.act(obs, deterministic=True)[0][0] - 1.0)
        for _ in range(3):
            self.learner.update(self.bandit_buffer(), self.rng)
        after = abs(self.learner.act(obs, deterministic=True)[0][0] - 1.0)
        self.assertLess(after, before)

    def test_empty_buffer(self):
        with self.assertRaises(EmptyBufferError):
            ppo_update(TrajectoryBuffer(5), self.learner, self.rng)

    def test_non_finite_loss_aborts(self):
        buffer = self.bandit_buffer(64)
        self.learner.policy_params.flat[...] = np.nan
        with self.assertRaises(NonFiniteLossError) as ctx:
            self.learner.update(buffer, self.rng)
        self.assertEqual(ctx.exception.diagnostics["epoch"], 0)
        self.assertIn("policy_loss", ctx.exception.as_record()["diagnostics"])

    @slow
    def test_pendulum_imitation_converges(self):
        env = PendulumImitation()
        rng = np.random.default_rng(0)
        policy = GaussianMLPPolicy(env.observation_size, env.action_size, hidden=(32, 32))
        value_fn = ValueFunction(env.observation_size, hidden=(32, 32))
        learner = PPOLearner(
            policy,
            policy.init_params(rng, policy.initial_log_std(0.1)),
            value_fn,
            value_fn.init_params(rng),
            PPOConfig(policy_lr=3e-3, value_lr=3e-3, epochs=10, minibatch_size=256),
        )
        for _ in range(60):
            learner.update(collect(env, learner, rng, 2000), rng)
        final = collect(env, learner, rng, 2000)
        self.assertGreaterEqual(final.mean_reward(), 0.9 * env.reward_upper_bound)


class CheckpointTest(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name) / "uhc.npz"
        rng = np.random.default_rng(13)
        self.policy = MCPPolicy(6, 3, num_primitives=2, primitive_hidden=(5,), composer_hidden=(4,))
        self.params = self.policy.init_params(rng, self.policy.initial_log_std(0.1))
        self.optimizer = Adam(self.params.size, 5e-5)
        self.optimizer.step(self.params, rng.normal(size=self.params.size))
        self.rng = np.random.default_rng(99)

    def tearDown(self):
        self.directory.cleanup()

    def save(self):
        return save_checkpoint(
            self.path,
            Checkpoint(
                kind="uhc",
                networks={"policy": self.params},
                optimizers={"policy": self.optimizer.state()},
                rng_state=self.rng.bit_generator.state,
                config_hash="f00d",
            ),
        )

    def test_round_trip_is_bit_identical(self):
        self.save()
        loaded = load_checkpoint(self.path, kind="uhc")
        x = np.random.default_rng(1).normal(size=(4, 6))
        params = loaded.network("policy")
        self.assertTrue(np.array_equal(self.policy(params, x), self.policy(self.params, x)))
        self.assertTrue(np.array_equal(params.log_std, self.params.log_std))
        self.assertEqual(loaded.optimizers["policy"]["t"], 1)
        self.assertTrue(np.array_equal(loaded.optimizers["policy"]["m"], self.optimizer.m))
        self.assertEqual(loaded.config_hash, "f00d")
        self.assertEqual(loaded.rng().normal(), np.random.default_rng(99).normal())
        self.assertEqual([p.name for p in self.path.parent.iterdir()], ["uhc.npz"])

    def test_corrupt_file(self):
        self.path.write_bytes(b"not a zip archive")
        with self.assertRaises(CheckpointCorruptError):
            load_checkpoint(self.path)

    def test_newer_version_refused(self):
        header = {"format_version": "2.0", "kind": "uhc", "networks": {}, "config_hash": ""}
        with self.path.open("wb") as handle:
            np.savez(handle, header=np.array(json.dumps(header)))
        with self.assertRaises(CheckpointVersionError):
            load_checkpoint(self.path)

    def test_truncated_parameters(self):
        self.save()
        with np.load(self.path) as data:
            arrays = {name: data[name] for name in data.files}
        arrays["policy.flat"] = arrays["policy.flat"][:-1]
        with self.path.open("wb") as handle:
            np.savez(handle, **arrays)
        with self.assertRaises(CheckpointCorruptError):
            load_checkpoint(self.path)
