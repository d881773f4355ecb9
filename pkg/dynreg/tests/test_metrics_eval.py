import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given
from hypothesis import strategies as st

from dynreg.exceptions import ConfigError, DomainError, InsufficientDataError, ShapeError, UnknownActionError
from harness_cli.models import MotionFile
from math_pose.kinematics import joint_positions
from math_pose.models import Pose, QVel, Quat
from math_pose.rotations import yaw_matrix
from metrics_eval.errors import (
    accel_error,
    camera_error,
    camera_row,
    camera_transform,
    foot_points,
    foot_sliding,
    mpjpe,
    mpjpe_sequence,
    root_error,
)
from metrics_eval.failsafe import FailSafe, fail_safe_monitor
from metrics_eval.models import MetricsReport, SequenceMetrics
from metrics_eval.report import format_per_joint, format_report, format_summary, score_sequence, summarize
from metrics_eval.serializer import read_report, write_report
from metrics_eval.success import EpisodeTrace, success_check
from physics_sim.simulator import Simulator

from .utils import bundled_model, random_pose

STANDING_HEIGHT = 0.9


def walking_clip(model, frames=6, speed=1.0, name="walk"):
    poses = [
        Pose(np.array([speed * t / 30.0, 0.0, STANDING_HEIGHT]), Quat.identity(), np.zeros(model.num_angles))
        for t in range(frames)
    ]
    return MotionFile(name=name, model=model.name, poses=poses)


def translation(x, y=0.0, z=0.0):
    matrix = np.eye(4)
    matrix[:3, 3] = (x, y, z)
    return matrix


class RootErrorTest(SimpleTestCase):
    def test_identical(self):
        frames = np.stack([translation(0.3, 1.0), translation(0.4, 1.0)])
        self.assertEqual(root_error(frames, frames), 0.0)

    def test_unit_translation(self):
        self.assertAlmostEqual(root_error([translation(1.0)], [np.eye(4)]), 1.0)

    def test_half_turn(self):
        turned = np.eye(4)
        turned[:3, :3] = yaw_matrix(np.pi)
        self.assertAlmostEqual(root_error([turned], [np.eye(4)]), np.sqrt(8.0))

    def test_length_mismatch(self):
        with self.assertRaises(ShapeError):
            root_error([np.eye(4)], [np.eye(4), np.eye(4)])
        with self.assertRaises(InsufficientDataError):
            root_error(np.zeros((0, 4, 4)), np.zeros((0, 4, 4)))


class MPJPETest(SimpleTestCase):
    def setUp(self):
        self.reference = np.random.default_rng(3).normal(size=(24, 3))

    def test_single_joint_offset(self):
        moved = self.reference.copy()
        moved[5] += (0.003, 0.004, 0.0)
        mean, per_joint = mpjpe(moved, self.reference)
        self.assertAlmostEqual(mean, 5.0 / 24.0)
        self.assertAlmostEqual(per_joint[5], 5.0)
        self.assertEqual(np.count_nonzero(per_joint > 1e-9), 1)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
    def test_root_relative(self, x, y, z):
        mean, _ = mpjpe(self.reference + (x, y, z), self.reference)
        self.assertLess(mean, 1e-6)

    def test_sequence_average(self):
        moved = self.reference.copy()
        moved[5] += (0.003, 0.004, 0.0)
        mean, per_joint = mpjpe_sequence([moved, self.reference], [self.reference, self.reference])
        self.assertAlmostEqual(mean, 2.5 / 24.0)
        self.assertAlmostEqual(per_joint[5], 2.5)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            mpjpe(self.reference, self.reference[:-1])


class AccelErrorTest(SimpleTestCase):
    def test_constant_sequences(self):
        still = np.ones((5, 3, 3))
        self.assertEqual(accel_error(still, 2 * still), 0.0)

    def test_hand_case(self):
        # joint 0 jumps 1 mm on the last frame, joint 1 matches
        moved = np.zeros((3, 2, 3))
        moved[2, 0, 0] = 0.001
        self.assertAlmostEqual(accel_error(moved, np.zeros((3, 2, 3))), 0.5)

    def test_too_short(self):
        with self.assertRaises(InsufficientDataError):
            accel_error(np.zeros((2, 1, 3)), np.zeros((2, 1, 3)))


class FootSlidingTest(SimpleTestCase):
    def slide(self, height):
        return foot_sliding(np.array([[[0.0, 0.0, height]], [[0.01, 0.0, height]]]), 0.033)

    def test_ground_contact(self):
        self.assertAlmostEqual(self.slide(0.0), 10.0)

    def test_threshold(self):
        self.assertAlmostEqual(self.slide(0.033), 0.0)
        self.assertAlmostEqual(self.slide(0.2), 0.0)

    def test_half_threshold(self):
        self.assertAlmostEqual(self.slide(0.0165), 10.0 * (2.0 - np.sqrt(2.0)))

    def test_continuous_below_threshold(self):
        self.assertLess(self.slide(0.03299999), 1e-5)

    def test_standing_still(self):
        self.assertEqual(foot_sliding(np.zeros((4, 2, 3))), 0.0)

    def test_foot_points_rest_on_ground(self):
        model = bundled_model("chain5")
        pose = Pose(np.array([0.0, 0.0, STANDING_HEIGHT]), Quat.identity(), np.zeros(model.num_angles))
        points = foot_points(model, pose)
        self.assertEqual(points.shape, (2, 3))
        np.testing.assert_allclose(points[:, 2], 0.0, atol=1e-9)


class CameraErrorTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.clip = walking_clip(self.model)

    def test_self_consistent(self):
        rows = [camera_row(camera_transform(self.model, p)) for p in self.clip.poses]
        self.assertLess(camera_error(self.model, self.clip.poses, rows), 1e-9)

    def test_vertical_offset(self):
        rows = np.array([camera_row(camera_transform(self.model, p)) for p in self.clip.poses])
        rows[:, 2] += 0.1
        self.assertAlmostEqual(camera_error(self.model, self.clip.poses, rows), 0.1)

    def test_rotation_matches_root_error(self):
        rng = np.random.default_rng(9)
        pose = random_pose(self.model, rng)
        turned = pose.replace(root_rot=Quat.from_array([0.0, 0.0, 0.0, 1.0]))
        rows = [camera_row(camera_transform(self.model, pose))]
        expected = root_error([camera_transform(self.model, turned)], [camera_transform(self.model, pose)])
        self.assertAlmostEqual(camera_error(self.model, [turned], rows), expected)


class SuccessTest(SimpleTestCase):
    def test_push(self):
        self.assertEqual(success_check("push", EpisodeTrace(object_displacement=0.15)), 1)
        self.assertEqual(success_check("push", EpisodeTrace(object_displacement=0.05)), 0)

    def test_sit(self):
        legs = ("L_Leg", "R_Leg")
        pelvis = EpisodeTrace(object_contacts=(frozenset(), frozenset({"Pelvis"})), leg_roots=legs)
        both = EpisodeTrace(object_contacts=(frozenset({"L_Leg", "R_Leg"}),), leg_roots=legs)
        one = EpisodeTrace(object_contacts=(frozenset({"L_Leg"}), frozenset({"R_Leg"})), leg_roots=legs)
        self.assertEqual(success_check("sit", pelvis), 1)
        self.assertEqual(success_check("sit", both), 1)
        self.assertEqual(success_check("sit", one), 0)

    def test_fall_overrides(self):
        trace = EpisodeTrace(fell=True, object_contacts=(frozenset({"Pelvis"}),))
        self.assertEqual(success_check("sit", trace), 0)
        self.assertEqual(success_check("walk", EpisodeTrace(fell=True)), 0)

    def test_step(self):
        self.assertEqual(success_check("step", EpisodeTrace(step_height=0.12)), 1)
        self.assertEqual(success_check("step", EpisodeTrace(step_height=0.04)), 0)

    def test_avoid(self):
        near = EpisodeTrace(object_contacts=(frozenset(),), end_position=np.array([0.3, 0.0, 0.9]),
                            desired_end=np.zeros(3))
        touched = EpisodeTrace(object_contacts=(frozenset({"L_Foot"}),), end_position=np.zeros(3),
                               desired_end=np.zeros(3))
        far = EpisodeTrace(end_position=np.array([0.6, 0.0, 0.0]), desired_end=np.zeros(3))
        self.assertEqual(success_check("avoid", near), 1)
        self.assertEqual(success_check("avoid", touched), 0)
        self.assertEqual(success_check("avoid", far), 0)

    def test_pure(self):
        trace = EpisodeTrace(object_displacement=0.2)
        self.assertEqual([success_check("push", trace) for _ in range(3)], [1, 1, 1])

    def test_unknown_action(self):
        with self.assertRaises(UnknownActionError):
            success_check("dance", EpisodeTrace())


class FailSafeTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.pose = Pose(np.array([0.0, 0.0, STANDING_HEIGHT]), Quat.identity(), np.zeros(self.model.num_angles))

    def test_monitor(self):
        joints = joint_positions(self.model, self.pose)
        self.assertFalse(fail_safe_monitor(joints, joints, 0.5))
        self.assertTrue(fail_safe_monitor(joints + (0.6, 0.0, 0.0), joints, 0.5))
        self.assertFalse(fail_safe_monitor(joints + (0.4, 0.0, 0.0), joints, 0.5))

    def test_reset_restarts_on_kinematic_pose(self):
        sim = Simulator(self.model)
        fallen = self.pose.replace(root_pos=[0.0, 0.0, 0.2])
        state = sim.reset(fallen, QVel.zeros(self.model.num_angles)).replace(sim_time=1.0)
        failsafe = FailSafe(self.model, threshold=0.5)
        previous = self.pose.replace(root_pos=[-1.0 / 30.0, 0.0, STANDING_HEIGHT])
        decision = failsafe.check(state.q, self.pose, previous)
        self.assertTrue(decision.reset)
        self.assertAlmostEqual(decision.error, 0.7)
        np.testing.assert_allclose(decision.velocity.root_lin_vel, [1.0, 0.0, 0.0], atol=1e-9)

        restarted = failsafe.apply(sim, state, decision)
        self.assertEqual(failsafe.resets, 1)
        self.assertEqual(restarted.sim_time, 1.0)
        self.assertIs(sim.state, restarted)
        after = failsafe.check(restarted.q, self.pose)
        self.assertFalse(after.reset)
        self.assertLess(after.error, 1e-12)

    def test_no_reset_keeps_state(self):
        sim = Simulator(self.model)
        state = sim.reset(self.pose, QVel.zeros(self.model.num_angles))
        failsafe = FailSafe(self.model)
        self.assertIs(failsafe.apply(sim, state, failsafe.check(state.q, self.pose)), state)
        self.assertEqual(failsafe.resets, 0)


class ReportTest(SimpleTestCase):
    def setUp(self):
        self.report = MetricsReport(
            sequences=[
                SequenceMetrics("a", "sit", success=1, root_error=0.2, mpjpe=40.0, per_joint_mpjpe={"L_Leg": 10.0}),
                SequenceMetrics("b", "sit", success=0, root_error=0.4, mpjpe=60.0, per_joint_mpjpe={"L_Leg": 30.0}),
                SequenceMetrics("c", "push", success=1, root_error=0.0, mpjpe=20.0, failsafe_resets=3),
            ],
            seed=4,
        )

    def test_aggregate_is_mean(self):
        aggregate = self.report.aggregate()
        self.assertAlmostEqual(aggregate["success"], 2.0 / 3.0)
        self.assertAlmostEqual(aggregate["mpjpe"], 40.0)
        self.assertAlmostEqual(aggregate["failsafe_resets"], 1.0)
        self.assertEqual(self.report.success_by_action(), {"push": 1.0, "sit": 0.5})
        self.assertEqual(self.report.per_joint(), {"L_Leg": 20.0})

    def test_rejects_invalid_values(self):
        with self.assertRaises(DomainError):
            SequenceMetrics("x", success=2)
        with self.assertRaises(DomainError):
            SequenceMetrics("x", mpjpe=-1.0)

    def test_summary_across_seeds(self):
        other = MetricsReport(sequences=[SequenceMetrics("a", "sit", success=1, mpjpe=60.0)], seed=5)
        summary = summarize([self.report, other])
        self.assertAlmostEqual(summary["mpjpe"]["mean"], 50.0)
        self.assertAlmostEqual(summary["mpjpe"]["std"], 10.0)
        table = format_summary(summary, 2)
        self.assertIn("50.000 ± 10.000", table)

    def test_table_column_order(self):
        header = format_report(self.report).splitlines()[0].split()
        self.assertEqual(header[2:9], ["S_inter", "E_root", "E_mpjpe", "E_acc", "FS", "PT", "E_cam"])
        self.assertIn("L_Leg", format_per_joint(self.report))

    def test_file_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(Path(tmp) / "report.json", self.report)
            loaded = read_report(path)
        self.assertEqual(loaded.seed, 4)
        self.assertEqual(loaded.aggregate(), self.report.aggregate())

    def test_read_rejects_bad_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.json"
            path.write_text('{"format_version": "1.0", "sequences": [{"clip": "a", "success": 3}]}')
            with self.assertRaises(ConfigError):
                read_report(path)
            path.write_text("{")
            with self.assertRaises(ConfigError):
                read_report(path)


class ScoreSequenceTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        self.sim = Simulator(self.model)
        self.clip = walking_clip(self.model)

    def playback(self):
        return [self.sim.set_state(p, v) for p, v in zip(self.clip.poses, self.clip.velocities)]

    def test_playback_scores_zero_error(self):
        metrics = score_sequence(self.model, self.sim, self.clip, self.playback())
        self.assertEqual(metrics.success, 1)
        self.assertEqual(metrics.action, "walk")
        self.assertLess(metrics.mpjpe, 1e-9)
        self.assertLess(metrics.root_error, 1e-9)
        self.assertLess(metrics.accel_error, 1e-9)
        self.assertEqual(metrics.frames, self.clip.num_frames)
        self.assertEqual(set(metrics.per_joint_mpjpe), {"Pelvis", "L_Leg", "R_Leg", "L_Foot", "R_Foot"})

    def test_fall_and_prefix(self):
        states = self.playback()[:2]
        metrics = score_sequence(self.model, self.sim, self.clip, states, fell=True, failsafe_resets=2)
        self.assertEqual(metrics.success, 0)
        self.assertEqual(metrics.frames, 2)
        self.assertEqual(metrics.accel_error, 0.0)
        self.assertEqual(metrics.failsafe_resets, 2)
