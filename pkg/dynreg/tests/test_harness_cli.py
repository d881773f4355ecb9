import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from dynreg.exceptions import ConfigError, InsufficientDataError
from harness_cli.logs import read_log
from harness_cli.models import SyntheticSpec
from harness_cli.serializer import load_clips, load_run_config, read_motion_file, write_motion_file
from harness_cli.synthetic import gen_synthetic_dataset, perturb_context, write_dataset
from humanoid_model.loaders import load_scene_file
from math_pose.kinematics import finite_difference_velocity
from metrics_eval.models import MetricsReport, SequenceMetrics
from metrics_eval.serializer import read_report, write_report

from .utils import bundled_model, slow

SMOKE = Path(settings.RUN_CONFIGS_DIR) / "smoke.yaml"
SMALL_SPEC = SyntheticSpec(actions=("walk", "sit"), clips_per_action=1, held_out_per_action=1, frames=12, phi_dim=4)


class RunConfigTest(SimpleTestCase):
    def write(self, tmp, text, name="run.yaml"):
        path = Path(tmp) / name
        path.write_text(text)
        return path

    def test_defaults(self):
        config = load_run_config()
        self.assertEqual(config.model, "default25")
        self.assertEqual(config.uhc.gamma, settings.UHC_GAMMA)
        self.assertEqual(config.kin.batch_size, settings.KIN_BATCH_SIZE)
        self.assertEqual(config.kin.cov_std, 0.04)
        self.assertEqual(config.eval.threshold, settings.FAILSAFE_THRESHOLD)
        self.assertEqual(len(config.config_hash), 64)

    def test_hash(self):
        first = load_run_config()
        self.assertEqual(load_run_config().config_hash, first.config_hash)
        self.assertEqual(load_run_config(output_dir="/elsewhere").config_hash, first.config_hash)
        self.assertNotEqual(load_run_config(seed=1).config_hash, first.config_hash)

    def test_global_keys_reach_the_stages(self):
        config = load_run_config(seed=7, num_workers=3)
        self.assertEqual((config.uhc.seed, config.kin.seed), (7, 7))
        self.assertEqual((config.uhc.num_workers, config.kin.num_workers), (3, 3))

    def test_yaml_and_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            from_yaml = load_run_config(self.write(tmp, "model: chain5\nkin:\n  gru_hidden: 32\n"))
            from_json = load_run_config(self.write(tmp, '{"model": "chain5", "kin": {"gru_hidden": 32}}', "run.json"))
        self.assertEqual(from_yaml.kin.gru_hidden, 32)
        self.assertEqual(from_yaml.config_hash, from_json.config_hash)

    def test_unknown_keys(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError) as top:
                load_run_config(self.write(tmp, "modle: chain5\n"))
            with self.assertRaises(ConfigError) as nested:
                load_run_config(self.write(tmp, "uhc:\n  gama: 0.9\n"))
            with self.assertRaises(ConfigError) as global_key:
                load_run_config(self.write(tmp, "kin:\n  seed: 3\n"))
        self.assertEqual(top.exception.key, "modle")
        self.assertEqual(nested.exception.key, "uhc.gama")
        self.assertEqual(global_key.exception.key, "kin.seed")
        self.assertTrue(top.exception.path.endswith("run.yaml"))

    def test_invalid_values(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError) as cm:
                load_run_config(self.write(tmp, "kin:\n  episode_len: 1\n"))
            self.assertEqual(cm.exception.key, "kin.episode_len")
            with self.assertRaises(ConfigError) as cm:
                load_run_config(self.write(tmp, "synthetic:\n  actions: [dance]\n"))
            self.assertEqual(cm.exception.key, "synthetic.actions")
            with self.assertRaises(ConfigError):
                load_run_config(self.write(tmp, "model: [chain5\n"))
            with self.assertRaises(ConfigError):
                load_run_config(self.write(tmp, "- chain5\n"))

    def test_bundled_run_configs(self):
        for path in sorted(Path(settings.RUN_CONFIGS_DIR).glob("*.yaml")):
            with self.subTest(path=path.name):
                config = load_run_config(path)
                bundled_model(config.model)


class MotionFileTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")
        train, _ = gen_synthetic_dataset(self.model, SMALL_SPEC)
        self.clip = train[1]

    def write_record(self, tmp, **changes):
        with tempfile.NamedTemporaryFile("w", suffix=".json", dir=tmp, delete=False) as handle:
            path = write_motion_file(handle.name, self.clip)
        record = json.loads(path.read_text())
        record.update(changes)
        path.write_text(json.dumps(record))
        return path

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            clip = read_motion_file(write_motion_file(Path(tmp) / "sit.json", self.clip))
        self.assertEqual((clip.name, clip.action, clip.scene, clip.object_class), ("sit_000", "sit", "chair", "chair"))
        np.testing.assert_array_equal(clip.poses[-1].as_vector(), self.clip.poses[-1].as_vector())
        np.testing.assert_array_equal(clip.camera, self.clip.camera)
        np.testing.assert_array_equal(clip.phi, self.clip.phi)

    def test_rejects_bad_records(self):
        with tempfile.TemporaryDirectory() as tmp:
            cases = {
                "fps": {"fps": 25},
                "camera": {"camera": self.clip.camera[:3].tolist()},
                "action": {"action": "dance"},
                "tempo": {"tempo": 1},
                "format_version": {"format_version": "2.0"},
            }
            for key, changes in cases.items():
                with self.subTest(key=key):
                    with self.assertRaises(ConfigError) as cm:
                        read_motion_file(self.write_record(tmp, **changes))
                    self.assertEqual(cm.exception.key, key)
            with self.assertRaises(ConfigError):
                read_motion_file(self.write_record(tmp, camera=None))

    def test_load_clips(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_dataset(tmp, [self.clip], [])
            clips = load_clips(Path(tmp) / "train" / "*.json", self.model)
            self.assertEqual([c.name for c in clips], ["sit_000"])
            with self.assertRaises(ConfigError):
                load_clips(Path(tmp) / "train" / "*.json", bundled_model("default25"))
            with self.assertRaises(InsufficientDataError):
                load_clips(Path(tmp) / "missing" / "*.json")


class SyntheticDatasetTest(SimpleTestCase):
    def setUp(self):
        self.model = bundled_model("chain5")

    def test_walk_speed(self):
        train, _ = gen_synthetic_dataset(self.model, SyntheticSpec(actions=("walk",), clips_per_action=2, frames=30))
        for clip in train:
            speeds = [np.linalg.norm(v.root_lin_vel[:2]) for v in finite_difference_velocity(clip.poses, 1 / 30)]
            np.testing.assert_allclose(speeds, clip.extra["speed"], atol=1e-6)
            self.assertGreaterEqual(clip.extra["speed"], 0.6)

    def test_sit_ends_on_the_seat(self):
        chair = load_scene_file("chair").primary
        train, held_out = gen_synthetic_dataset(self.model, SyntheticSpec(actions=("sit",), frames=60))
        for clip in train + held_out:
            pelvis = clip.poses[-1].root_pos
            self.assertTrue(np.all(np.abs(pelvis[:2] - chair.position[:2]) <= chair.half_extents[:2]))
            self.assertGreaterEqual(pelvis[2], chair.top_height)
            self.assertEqual(clip.object_name, "chair")

    def test_every_action(self):
        train, held_out = gen_synthetic_dataset(self.model, SyntheticSpec(frames=20, phi_dim=6))
        self.assertEqual(len(train), 2 * len(settings.ACTION_LABELS))
        self.assertEqual(len(held_out), len(settings.ACTION_LABELS))
        for clip in train + held_out:
            self.assertEqual(clip.num_frames, 20)
            self.assertEqual(clip.phi.shape, (20, 6))
            np.testing.assert_allclose(np.linalg.norm(clip.camera[:, 3:], axis=1), 1.0)
            self.assertTrue(np.all(clip.camera[:, 3] >= 0.0))
        avoid = next(c for c in train if c.action == "avoid")
        self.assertIsNotNone(avoid.desired_end)
        push = next(c for c in train if c.action == "push")
        self.assertGreater(np.linalg.norm(push.object_positions[-1] - push.object_positions[0]), 0.0)

    def test_seeded_files_repeat(self):
        contents = []
        for seed in (3, 3, 4):
            with tempfile.TemporaryDirectory() as tmp:
                train, held_out = gen_synthetic_dataset(self.model, SMALL_SPEC, seed=seed)
                contents.append([p.read_bytes() for p in write_dataset(tmp, train, held_out)])
        self.assertEqual(contents[0], contents[1])
        self.assertNotEqual(contents[0], contents[2])

    def test_perturbed_context(self):
        _, held_out = gen_synthetic_dataset(self.model, SMALL_SPEC)
        clip = held_out[0]
        self.assertIs(perturb_context(clip, np.random.default_rng(0), 0.0), clip)
        noisy = perturb_context(clip, np.random.default_rng(0), 0.05)
        again = perturb_context(clip, np.random.default_rng(0), 0.05)
        np.testing.assert_array_equal(noisy.camera, again.camera)
        self.assertGreater(np.abs(noisy.phi - clip.phi).max(), 0.0)
        np.testing.assert_array_equal(noisy.poses[3].as_vector(), clip.poses[3].as_vector())


class CommandTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.output = Path(self.tmp.name)
        self.addCleanup(self.tmp.cleanup)

    def call(self, name, *args, **options):
        out = StringIO()
        call_command(name, *args, config=str(SMOKE), output_dir=str(self.output), stdout=out, stderr=StringIO(),
                     **options)
        return out.getvalue()

    def assertExitCode(self, code, name, *args, **options):
        with self.assertRaises(CommandError) as cm:
            self.call(name, *args, **options)
        self.assertEqual(cm.exception.returncode, code)
        return json.loads((self.output / "error.json").read_text())

    def test_gen_data(self):
        self.call("gen_data")
        self.assertEqual(len(list((self.output / "clips" / "train").glob("*.json"))), 2)
        self.assertEqual(len(list((self.output / "clips" / "held_out").glob("*.json"))), 2)
        record = read_log(self.output / "gen_data.jsonl")[0]
        self.assertEqual(record["config_hash"], load_run_config(SMOKE).config_hash)
        clip = read_motion_file(self.output / "clips" / "train" / "walk_000.json")
        self.assertEqual(clip.config_hash, record["config_hash"])

    def test_playback_eval(self):
        self.call("gen_data")
        out = self.call("eval", target="imitation", playback=True)
        report = read_report(self.output / "reports" / "imitation_seed_0.json")
        self.assertEqual(report.aggregate()["mpjpe"], 0.0)
        self.assertEqual(report.aggregate()["root_error"], 0.0)
        self.assertIn("mean", out)

    def test_seed_sweep(self):
        self.call("gen_data")
        out = self.call("eval", target="imitation", playback=True, seeds=2)
        self.assertIn("±", out)
        self.assertEqual(len(list((self.output / "reports").glob("*.json"))), 2)
        self.assertEqual([r["iteration"] for r in read_log(self.output / "eval.jsonl")], [0, 1])

    def test_supervised_training(self):
        self.call("gen_data")
        self.call("train_kin", "sl")
        self.assertTrue((self.output / "kin_sl.npz").exists())
        self.assertEqual([r["event"] for r in read_log(self.output / "train_kin_sl.jsonl")], ["train_kin_sl"])

    def test_dynreg_without_uhc(self):
        self.call("gen_data")
        record = self.assertExitCode(1, "train_kin", "dynreg")
        self.assertEqual(record["kind"], "missing_dependency")

    def test_config_error(self):
        bad = self.output / "bad.yaml"
        bad.write_text("uhc:\n  gama: 0.9\n")
        with self.assertRaises(CommandError) as cm:
            call_command("gen_data", config=str(bad), output_dir=str(self.output), stdout=StringIO(),
                         stderr=StringIO())
        self.assertEqual(cm.exception.returncode, 1)
        record = json.loads((self.output / "error.json").read_text())
        self.assertEqual((record["kind"], record["key"]), ("config", "uhc.gama"))
        self.assertTrue(record["path"].endswith("bad.yaml"))

    def test_missing_data(self):
        record = self.assertExitCode(2, "train_uhc")
        self.assertEqual(record["kind"], "insufficient_data")

    def test_metrics(self):
        paths = []
        for seed, success in enumerate((1, 0)):
            report = MetricsReport([SequenceMetrics("clip", "walk", success=success, mpjpe=10.0 * (seed + 1))], seed=seed)
            paths.append(str(write_report(self.output / f"report_{seed}.json", report)))
        out = self.call("metrics", *paths)
        self.assertIn("15.000 ± 5.000", out)
        self.assertIn("mean", self.call("metrics", paths[0], per_joint=True))
        record = self.assertExitCode(3, "metrics", *paths, min_success=0.75)
        self.assertEqual(record["kind"], "acceptance")

    def test_replay_motion_file(self):
        self.call("gen_data")
        out = self.call("replay", str(self.output / "clips" / "train" / "walk_000.json"))
        self.assertIn("walk_000", out)
        self.assertExitCode(1, "replay", str(self.output / "missing.jsonl"))

    @slow
    def test_pipeline_repeats(self):
        reports = []
        for run in ("first", "second"):
            self.output = Path(self.tmp.name) / run
            self.call("gen_data")
            self.call("train_uhc")
            self.call("train_kin", "dynreg")
            self.call("eval", dump=True)
            reports.append(read_report(self.output / "reports" / "kin_seed_0.json").as_dict())
            self.assertTrue(list((self.output / "dumps" / "seed_0").glob("*.jsonl")))
        self.assertEqual(reports[0], reports[1])

        self.output = Path(self.tmp.name) / "first"
        self.call("eval", checkpoint=str(self.output / "kin_dynreg.npz"))
        self.assertEqual(read_report(self.output / "reports" / "kin_seed_0.json").as_dict(), reports[0])
