import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from dynreg.exceptions import CheckpointError, InsufficientDataError, ShapeError
from harness_cli.logs import JsonLinesLog, read_log
from harness_cli.models import MotionFile
from math_pose.models import Pose, QVel, Quat
from math_pose.rotations import quat_multiply, yaw_matrix, yaw_quat
from nn_rl_core.checkpoints import load_checkpoint, save_checkpoint
from physics_sim.models import SimParams
from physics_sim.simulator import Simulator
from uhc.actions import residual_action_to_pd_target
from uhc.agent import PlaybackController, UHCAgent
from uhc.evaluation import imitation_eval
from uhc.features import feature_size, split_features, uhc_features
from uhc.models import UHCAction, UHCConfig
from uhc.reward import uhc_reward
from uhc.rollout import tracking_error, uhc_rollout
from uhc.sampling import ValueGuidedSampler, sampling_probabilities, value_guided_sample
from uhc.training import CHECKPOINT_NAME, train_uhc

from .utils import bundled_model, random_pose, slow

STANDING_HEIGHT = 0.9

SMALL = dict(num_primitives=2, primitive_hidden=(16,), composer_hidden=(8,), value_hidden=(16,), num_workers=1)


def standing_clip(model, frames=8, height=STANDING_HEIGHT, speed=0.0, name="stand"):
    poses = [
        Pose(np.array([speed * t / 30.0, 0.0, height]), Quat.identity(), np.zeros(model.num_angles))
        for t in range(frames)
    ]
    return MotionFile(name=name, model=model.name, poses=poses)


def moved(pose, psi, offset):
    """The pose under a world yaw `psi` followed by a horizontal translation."""
    return pose.replace(
        root_pos=yaw_matrix(psi) @ pose.root_pos + offset,
        root_rot=quat_multiply(yaw_quat(psi).array, pose.root_rot.array),
    )


def turned_velocity(qvel, psi):
    rotation = yaw_matrix(psi)
    return QVel(rotation @ qvel.root_lin_vel, rotation @ qvel.root_ang_vel, qvel.joint_vel)


def zero_agent(model, **changes):
    agent = UHCAgent.build(model, UHCConfig(**{**SMALL, **changes}), np.random.default_rng(0))
    agent.learner.policy_params.flat[:] = 0.0
    return agent


class FeaturesTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("default25")
        self.rng = np.random.default_rng(5)

    def test_length(self):
        self.assertEqual(feature_size(self.model), 640)
        self.assertEqual(feature_size(bundled_model("chain5")), 146)
        pose = random_pose(self.model, self.rng)
        features = uhc_features(self.model, pose, QVel.zeros(self.model.num_angles), pose)
        self.assertEqual(features.shape, (640,))

    def test_perfect_tracking(self):
        pose = random_pose(self.model, self.rng)
        blocks = split_features(self.model, uhc_features(self.model, pose, QVel.zeros(69), pose))
        for name in ("pose_difference", "velocity", "heading_difference", "joint_position_difference"):
            self.assertEqual(np.abs(blocks[name]).max(), 0.0, name)
        rotation_difference = blocks["joint_rotation_difference"].reshape(-1, 4)
        np.testing.assert_allclose(np.abs(rotation_difference[:, 0]), 1.0, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-np.pi, np.pi), st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31))
    def test_yaw_translation_invariance(self, psi, x, y, seed):
        rng = np.random.default_rng(seed)
        q, target = random_pose(self.model, rng), random_pose(self.model, rng)
        qdot = QVel(rng.normal(size=3), rng.normal(size=3), rng.normal(size=69))
        offset = np.array([x, y, 0.0])
        before = uhc_features(self.model, q, qdot, target)
        after = uhc_features(
            self.model, moved(q, psi, offset), turned_velocity(qdot, psi), moved(target, psi, offset)
        )
        np.testing.assert_allclose(after, before, atol=1e-8)

    def test_example_yaw(self):
        q, target = random_pose(self.model, self.rng), random_pose(self.model, self.rng)
        rest = QVel.zeros(69)
        offset = np.array([5.0, -2.0, 0.0])
        psi = np.radians(37.0)
        np.testing.assert_allclose(
            uhc_features(self.model, moved(q, psi, offset), rest, moved(target, psi, offset)),
            uhc_features(self.model, q, rest, target),
            atol=1e-8,
        )

    def test_shape_mismatch(self):
        pose = random_pose(self.model, self.rng)
        with self.assertRaises(ShapeError):
            uhc_features(self.model, pose, QVel.zeros(12), pose)


class ActionTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.target = random_pose(self.model, np.random.default_rng(1))

    def test_zero_action(self):
        control = residual_action_to_pd_target(self.target, UHCAction.zeros(12))
        np.testing.assert_array_equal(control.pd_target, self.target.joint_angles)
        np.testing.assert_array_equal(control.residual_wrench, np.zeros(6))

    def test_locality_and_inverse(self):
        offsets = np.zeros(12)
        offsets[4] = 0.1
        control = residual_action_to_pd_target(self.target, UHCAction(offsets))
        shift = control.pd_target - self.target.joint_angles
        self.assertAlmostEqual(shift[4], 0.1)
        self.assertEqual(np.count_nonzero(np.abs(shift) > 1e-12), 1)
        np.testing.assert_allclose(shift, offsets, atol=1e-15)

    def test_wrench_scaling(self):
        control = residual_action_to_pd_target(self.target, np.r_[np.zeros(12), 1, 0, 0, 0, 0, 1], 100.0, 20.0)
        self.assertEqual(control.residual_wrench.tolist(), [100.0, 0.0, 0.0, 0.0, 0.0, 20.0])

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            residual_action_to_pd_target(self.target, np.zeros(10))


class RewardTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.pose = random_pose(self.model, np.random.default_rng(2))
        self.rest = QVel.zeros(12)

    def test_perfect_match(self):
        reward, terms = uhc_reward(self.model, self.pose, self.pose, self.rest, self.rest, np.zeros(6))
        self.assertAlmostEqual(reward, 1.0, places=9)
        self.assertEqual(set(terms), {"jr", "jp", "jv", "res"})

    def test_position_only(self):
        # five articulated bodies each off by 0.2 m: Σ‖Δ‖² = 0.2
        shifted = self.pose.replace(root_pos=self.pose.root_pos + (0.2, 0.0, 0.0))
        reward, terms = uhc_reward(self.model, shifted, self.pose, self.rest, self.rest, np.zeros(6))
        self.assertAlmostEqual(terms["jp"], np.exp(-1.0))
        self.assertAlmostEqual(reward, 0.3 + 0.55 * np.exp(-1.0) + 0.1 + 0.05, places=6)
        self.assertAlmostEqual(reward, 0.6523, places=4)

    def test_wrench_penalty_is_monotone(self):
        rewards = [
            uhc_reward(self.model, self.pose, self.pose, self.rest, self.rest, [scale, 0, 0, 0, 0, 0])[0]
            for scale in (0.0, 0.5, 1.0, 2.0)
        ]
        self.assertTrue(all(a > b for a, b in zip(rewards, rewards[1:])))
        self.assertGreater(rewards[-1], 0.0)


class SamplingTest(SimpleTestCase):
    def test_closed_form(self):
        probabilities = sampling_probabilities([0.0, 2.0 * np.log(4.0)], temperature=2.0)
        np.testing.assert_allclose(probabilities, [0.8, 0.2], atol=1e-12)

    def test_shift_invariance_and_monotonicity(self):
        values = np.array([0.3, 1.5, -0.7, 2.0])
        base = sampling_probabilities(values)
        self.assertAlmostEqual(base.sum(), 1.0, places=12)
        np.testing.assert_allclose(sampling_probabilities(values + 11.0), base, atol=1e-12)
        lowered = values.copy()
        lowered[1] -= 0.5
        self.assertGreater(sampling_probabilities(lowered)[1], base[1])

    def test_uniform_when_values_equal(self):
        model = bundled_model("chain5")
        sampler = ValueGuidedSampler([standing_clip(model, frames=11)])
        sampler.set_values(np.full(10, 3.0))
        draws = sampler.sample_indices(np.random.default_rng(7), size=100_000)
        counts = np.bincount(draws, minlength=10)
        self.assertGreater(chisquare(counts).pvalue, 0.01)

    def test_candidates_and_windows(self):
        model = bundled_model("chain5")
        sampler = ValueGuidedSampler([standing_clip(model, frames=3), standing_clip(model, frames=40, name="b")],
                                     window=10)
        self.assertEqual(sampler.frames[:3], [(0, 0), (0, 1), (1, 0)])
        self.assertEqual(len(sampler.frames), 2 + 39)
        self.assertEqual(sampler.window_of(1, 35).num_frames, 5)
        self.assertEqual(sampler.window_of(1, 3).num_frames, 10)

    def test_refresh_uses_value_function(self):
        model = bundled_model("chain5")
        clips = [standing_clip(model, frames=3)]
        name, start = value_guided_sample(clips, lambda clip: np.array([0.0, 50.0]), np.random.default_rng(0))
        self.assertEqual((name, start), ("stand", 0))

    def test_empty(self):
        with self.assertRaises(InsufficientDataError):
            sampling_probabilities([])
        with self.assertRaises(InsufficientDataError):
            ValueGuidedSampler([standing_clip(bundled_model("chain5"), frames=1)])


class RolloutTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")

    def test_perfect_tracking_without_gravity(self):
        agent = zero_agent(self.model)
        sim = Simulator(self.model, params=SimParams(gravity=(0.0, 0.0, 0.0)))
        clip = standing_clip(self.model, frames=6, height=2.0)
        episode = uhc_rollout(agent, clip, sim, deterministic=True)
        self.assertEqual(episode.length, 5)
        self.assertFalse(episode.fell)
        for transition in episode.transitions:
            self.assertAlmostEqual(transition.reward, 1.0, places=6)
        self.assertLess(tracking_error(self.model, episode.states[-1].q, clip.poses[-1]), 1e-6)

    def test_early_termination(self):
        agent = zero_agent(self.model)
        episode = uhc_rollout(agent, standing_clip(self.model), Simulator(self.model), termination_threshold=1e-12)
        self.assertTrue(episode.fell)
        self.assertEqual(episode.length, 1)
        self.assertTrue(episode.transitions[-1].done)
        self.assertEqual(episode.bootstrap_value, 0.0)

    def test_divergence_is_terminal(self):
        agent = zero_agent(self.model)
        sim = Simulator(self.model, params=SimParams(divergence_limit=0.5))
        with self.assertLogs("physics_sim.simulator", level="WARNING"):
            episode = uhc_rollout(agent, standing_clip(self.model), sim)
        self.assertTrue(episode.diverged)
        self.assertEqual(episode.length, 1)
        self.assertEqual(episode.transitions[0].reward, 0.0)
        self.assertTrue(episode.transitions[0].done)

    def test_seeded_rollouts_repeat(self):
        agent = UHCAgent.build(self.model, UHCConfig(**SMALL), np.random.default_rng(3))
        clip = standing_clip(self.model, frames=5)

        def rewards():
            episode = uhc_rollout(agent, clip, Simulator(self.model), np.random.default_rng(11))
            return [t.reward for t in episode.transitions]

        self.assertEqual(rewards(), rewards())


class DroppingController:
    """Puts the humanoid 0.8 m below every target."""

    def track(self, sim, state, target, target_vel=None, rng=None):
        dropped = target.replace(root_pos=target.root_pos - (0.0, 0.0, 0.8))
        sim.state = sim.set_state(dropped, QVel.zeros(target.joint_angles.size))
        return sim.state


class ImitationEvalTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.clips = [standing_clip(self.model, speed=1.0, name="a"), standing_clip(self.model, name="b")]

    def test_playback_is_exact(self):
        report = imitation_eval(PlaybackController(), self.model, self.clips)
        self.assertEqual(len(report), 2)
        for sequence in report.sequences:
            self.assertEqual(sequence.success, 1)
            self.assertLess(sequence.mpjpe, 1e-9)
            self.assertLess(sequence.root_error, 1e-9)
            self.assertEqual(sequence.frames, 8)

    def test_forced_fall(self):
        report = imitation_eval(DroppingController(), self.model, self.clips[:1])
        sequence = report.sequences[0]
        self.assertEqual(sequence.success, 0)
        self.assertTrue(sequence.fell)
        self.assertEqual(sequence.frames, 2)
        self.assertEqual(report.aggregate()["success"], 0.0)

    def test_reports_the_clip_action(self):
        clip = replace(standing_clip(self.model, name="seat"), action="sit")
        report = imitation_eval(PlaybackController(), self.model, [clip, self.clips[1]])
        self.assertEqual([s.action for s in report.sequences], ["sit", "walk"])
        self.assertEqual(report.sequences[0].success, 1)
        self.assertEqual(report.success_by_action()["sit"], 1.0)


class CheckpointTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.agent = UHCAgent.build(self.model, UHCConfig(**SMALL), np.random.default_rng(4))

    def test_reload_reproduces_eval(self):
        clips = [standing_clip(self.model, frames=6)]
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "uhc.npz", self.agent.to_checkpoint(np.random.default_rng(1), "abc"))
            restored = UHCAgent.from_checkpoint(load_checkpoint(path, kind="uhc"), self.model)
        self.assertEqual(restored.config, self.agent.config)
        np.testing.assert_array_equal(restored.policy_params.flat, self.agent.policy_params.flat)
        before = imitation_eval(self.agent, self.model, clips).as_dict()
        after = imitation_eval(restored, self.model, clips).as_dict()
        self.assertEqual(before, after)

    def test_wrong_model(self):
        checkpoint = self.agent.to_checkpoint()
        with self.assertRaises(CheckpointError):
            UHCAgent.from_checkpoint(checkpoint, bundled_model("default25"))
        checkpoint.kind = "kin"
        with self.assertRaises(CheckpointError):
            UHCAgent.from_checkpoint(checkpoint, self.model)


class TrainingTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.clips = [standing_clip(self.model, frames=12), standing_clip(self.model, frames=12, speed=0.5, name="w")]
        self.config = UHCConfig(
            **SMALL, batch_size=40, iterations=2, episode_len=10, ppo_epochs=1, minibatch_size=20, checkpoint_every=1
        )

    def test_smoke(self):
        with tempfile.TemporaryDirectory() as tmp:
            with JsonLinesLog(Path(tmp) / "train.jsonl", "hash") as log:
                agent, history = train_uhc(
                    self.model, self.clips, self.config, output_dir=tmp, log=log, eval_clips=self.clips[:1]
                )
            records = read_log(Path(tmp) / "train.jsonl")
            self.assertTrue((Path(tmp) / CHECKPOINT_NAME).exists())
            checkpoint = load_checkpoint(Path(tmp) / CHECKPOINT_NAME, kind="uhc")
        self.assertEqual(len(history), 2)
        self.assertEqual([r["event"] for r in records], ["train_uhc", "eval", "train_uhc", "eval"])
        self.assertTrue(all(r["config_hash"] == "hash" for r in records))
        self.assertEqual(checkpoint.extra["iteration"], 2)
        self.assertGreaterEqual(history[0]["samples"], 40)
        np.testing.assert_array_equal(checkpoint.network("policy").flat, agent.policy_params.flat)

    def test_seeded_runs_repeat(self):
        _, first = train_uhc(self.model, self.clips, self.config.with_changes(iterations=1))
        _, second = train_uhc(self.model, self.clips, self.config.with_changes(iterations=1))
        self.assertEqual(first, second)

    @slow
    def test_training_improves_imitation(self):
        clips = [
            standing_clip(self.model, frames=60, speed=s, name=f"clip{i}") for i, s in enumerate((0.0, 0.3, 0.6))
        ]
        config = UHCConfig(
            num_primitives=4, primitive_hidden=(128, 64), composer_hidden=(64, 32), value_hidden=(128, 64),
            batch_size=4000, iterations=150, episode_len=60, minibatch_size=512, policy_lr=3e-4, num_workers=4,
        )
        untrained = UHCAgent.build(self.model, config, np.random.default_rng(config.seed))
        before = imitation_eval(untrained, self.model, clips).aggregate()
        agent, _ = train_uhc(self.model, clips, config)
        after = imitation_eval(agent, self.model, clips).aggregate()
        self.assertLessEqual(after["mpjpe"], 0.2 * before["mpjpe"])
        self.assertGreaterEqual(after["success"], 2.0 / 3.0)
