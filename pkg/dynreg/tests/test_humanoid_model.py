import json

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from dynreg.exceptions import ConfigError, DomainError, ShapeError, TopologyError
from humanoid_model.geometry import capsule_inertia, capsule_mass
from humanoid_model.loaders import load_model, load_model_file, load_scene
from humanoid_model.models import Mobility, ObjectClass
from humanoid_model.poses import adjust_start_height, lowest_point, validate_pose_against_model
from math_pose.kinematics import forward_kinematics
from math_pose.models import Pose

from .utils import bundled_model, bundled_scene


def chain5_config():
    return json.loads((settings.FIXTURES_DIR / "model_chain5.json").read_text())


class CapsuleMassTest(SimpleTestCase):
    def test_closed_form_example(self):
        self.assertAlmostEqual(capsule_mass(0.05, 0.1, 1000.0), 2.0944, places=4)

    def test_sphere(self):
        self.assertAlmostEqual(capsule_mass(0.1, 0.0, 1000.0), 1000.0 * 4.0 / 3.0 * np.pi * 0.001, places=12)

    def test_linear_in_density(self):
        self.assertEqual(capsule_mass(0.07, 0.2, 2000.0), 2.0 * capsule_mass(0.07, 0.2, 1000.0))

    def test_nonpositive_inputs(self):
        for args in [(0.0, 0.1, 1000.0), (0.05, -0.1, 1000.0), (0.05, 0.1, 0.0)]:
            with self.assertRaises(DomainError):
                capsule_mass(*args)

    def test_inertia_follows_axis(self):
        along_z = capsule_inertia(0.05, 0.2, 1000.0)
        along_x = capsule_inertia(0.05, 0.2, 1000.0, axis=(1.0, 0.0, 0.0))
        self.assertAlmostEqual(along_z[0, 0], along_x[2, 2])
        self.assertAlmostEqual(along_z[2, 2], along_x[0, 0])
        self.assertLess(along_z[2, 2], along_z[0, 0])


class LoadModelTest(SimpleTestCase):
    def test_default_model(self):
        model = bundled_model("default25")
        self.assertEqual(model.num_bodies, 25)
        self.assertEqual(model.nq, 76)
        self.assertEqual(model.nv, 75)
        self.assertEqual(model.kp.shape, (69,))
        self.assertEqual(model.joint_limits.shape, (69, 2))

    def test_chain_model(self):
        model = bundled_model("chain5")
        self.assertEqual(model.num_bodies, 5)
        self.assertEqual(model.nv, 18)
        self.assertEqual(model.role("feet"), [3, 4])
        self.assertEqual(model.role("head"), 0)

    def test_masses_from_volume(self):
        model = bundled_model("chain5")
        leg = model.bodies[1]
        self.assertAlmostEqual(model.masses[1], capsule_mass(leg.radius, leg.half_length, leg.density))
        self.assertAlmostEqual(model.total_mass, float(model.masses.sum()))

    def test_parent_after_child(self):
        config = chain5_config()
        config["bodies"][3]["parent"] = 4
        with self.assertRaises(TopologyError) as ctx:
            load_model(json.dumps(config))
        self.assertEqual(ctx.exception.key, "bodies")
        self.assertIn("topological order", str(ctx.exception))

    def test_second_root(self):
        config = chain5_config()
        config["bodies"][2]["parent"] = -1
        with self.assertRaises(TopologyError):
            load_model(json.dumps(config))

    def test_nonpositive_radius(self):
        config = chain5_config()
        config["bodies"][1]["radius"] = 0.0
        with self.assertRaises(ConfigError) as ctx:
            load_model(json.dumps(config))
        self.assertEqual(ctx.exception.key, "bodies.1.radius")

    def test_unknown_field(self):
        config = chain5_config()
        config["colour"] = "blue"
        with self.assertRaises(ConfigError) as ctx:
            load_model(json.dumps(config))
        self.assertEqual(ctx.exception.key, "colour")

    def test_newer_format_version(self):
        config = chain5_config()
        config["format_version"] = "2.0"
        with self.assertRaises(ConfigError) as ctx:
            load_model(json.dumps(config))
        self.assertEqual(ctx.exception.key, "format_version")

    def test_role_naming_unknown_body(self):
        config = chain5_config()
        config["roles"]["head"] = "Skull"
        with self.assertRaises(ConfigError):
            load_model(json.dumps(config))

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            load_model_file("/nonexistent/model.json")
        self.assertEqual(ctx.exception.path, "/nonexistent/model.json")

    def test_total_mass_independent_of_child_order(self):
        config = chain5_config()
        pelvis, left, right, left_foot, right_foot = config["bodies"]
        left_foot["parent"], right_foot["parent"] = 2, 1
        config["bodies"] = [pelvis, right, left, right_foot, left_foot]
        reordered = load_model(json.dumps(config))
        self.assertAlmostEqual(reordered.total_mass, bundled_model("chain5").total_mass, places=12)

    def test_identity_pose_is_finite_for_bundled_models(self):
        for name in ("default25", "chain5", "ball"):
            model = bundled_model(name)
            frames = forward_kinematics(model, Pose.identity(model.num_angles))
            self.assertTrue(np.all(np.isfinite(frames.positions)))
            self.assertTrue(np.all(np.isfinite(frames.rotations)))


class ValidatePoseTest(SimpleTestCase):
    def test_identity_is_ok(self):
        model = bundled_model("default25")
        report = validate_pose_against_model(model, Pose.identity(model.num_angles))
        self.assertTrue(report.ok)
        self.assertEqual(report.describe(), "ok")

    def test_extra_angles(self):
        model = bundled_model("default25")
        with self.assertRaises(ShapeError):
            validate_pose_against_model(model, Pose.identity(model.num_angles + 3))

    def test_limit_violation_names_joint(self):
        model = bundled_model("chain5")
        angles = np.zeros(model.num_angles)
        angles[0] = 1.5
        report = validate_pose_against_model(model, Pose.identity(0).replace(joint_angles=angles))
        self.assertFalse(report.ok)
        self.assertEqual(len(report.violations), 1)
        self.assertEqual(report.violations[0].joint, "L_Leg")
        self.assertEqual(report.violations[0].axis, 0)
        self.assertIn("L_Leg[x]", report.describe())


class StartHeightTest(SimpleTestCase):
    def test_chain_stands_on_its_feet(self):
        model = bundled_model("chain5")
        pose = adjust_start_height(model, Pose.identity(model.num_angles, root_pos=(0.3, -0.2, 2.0)))
        self.assertAlmostEqual(pose.root_pos[2], 0.9, places=12)
        self.assertEqual(pose.root_pos[:2].tolist(), [0.3, -0.2])

    def test_clearance(self):
        model = bundled_model("default25")
        pose = adjust_start_height(model, Pose.identity(model.num_angles), clearance=0.01)
        self.assertAlmostEqual(lowest_point(model, pose), 0.01, places=12)

    def test_default_pelvis_height(self):
        model = bundled_model("default25")
        pose = Pose.identity(model.num_angles, root_pos=(0.0, 0.0, 0.93))
        self.assertAlmostEqual(lowest_point(model, pose), 0.0, places=6)


class SceneTest(SimpleTestCase):
    def test_bundled_scenes(self):
        self.assertEqual(bundled_scene("empty").objects, ())
        chair = bundled_scene("chair").primary
        self.assertIs(chair.obj_class, ObjectClass.CHAIR)
        self.assertAlmostEqual(chair.top_height, 0.45)
        box = bundled_scene("box_push").primary
        self.assertIs(box.mobility, Mobility.FREE)
        self.assertEqual(box.mass, 5.0)

    def test_free_object_needs_mass(self):
        text = json.dumps(
            {
                "format_version": "1.0",
                "name": "bad",
                "objects": [
                    {"name": "crate", "obj_class": "box", "shape": "box", "position": [0, 0, 0.2],
                     "half_extents": [0.2, 0.2, 0.2], "mobility": "free"}
                ],
            }
        )
        with self.assertRaises(ConfigError) as ctx:
            load_scene(text)
        self.assertEqual(ctx.exception.key, "objects.0.mass")

    def test_unknown_object(self):
        with self.assertRaises(ConfigError):
            bundled_scene("chair").index("sofa")
