from pathlib import Path

from dynreg.exceptions import ConfigError
from harness_cli.management.base import PipelineCommand
from harness_cli.serializer import read_motion_file
from humanoid_model.loaders import load_model_file, load_scene_file
from metrics_eval.models import MetricsReport
from metrics_eval.report import format_report, score_sequence
from metrics_eval.serializer import write_report
from physics_sim.serializer import read_trajectory_dump
from physics_sim.simulator import Simulator


def dump_sequence(path):
    """(model name, scene name, poses, velocities, object poses, reset count) of a trajectory dump."""
    header, frames = read_trajectory_dump(path)
    objects = [[(o["position"], o["rotation"]) for o in f["objects"]] or None for f in frames]
    resets = sum(1 for f in frames if f["reset"])
    poses = [f["pose"] for f in frames]
    velocities = [f["velocity"] for f in frames]
    return header["model"], header["scene"], poses, velocities, objects, resets


def clip_sequence(clip):
    objects = [None] * clip.num_frames
    return clip.model, clip.scene, list(clip.poses), list(clip.velocities), objects, 0


class Command(PipelineCommand):
    help = "Re-score a trajectory dump or a motion file against a reference clip without running dynamics."

    def add_command_arguments(self, parser):
        parser.add_argument("path", help="Trajectory dump (.jsonl) or motion file (.json).")
        parser.add_argument("--reference", help="Reference motion file; a motion file defaults to itself.")
        parser.add_argument("--report", help="Also write the MetricsReport JSON here.")

    def run(self, config, **options):
        path = Path(options["path"])
        if path.suffix == ".jsonl":
            if not options.get("reference"):
                raise ConfigError("replaying a trajectory dump needs --reference", path=path, key="reference")
            sequence = dump_sequence(path)
            reference = read_motion_file(options["reference"])
        else:
            clip = read_motion_file(path)
            sequence = clip_sequence(clip)
            reference = read_motion_file(options["reference"]) if options.get("reference") else clip
        model_name, scene_name, poses, velocities, objects, resets = sequence
        if reference.num_frames < len(poses):
            raise ConfigError(
                f"reference has {reference.num_frames} frames, the replay {len(poses)}", path=path, key="reference"
            )

        model = load_model_file(model_name)
        sim = Simulator(model, load_scene_file(scene_name), self.sim_params(config))
        states = [sim.set_state(q, qdot, object_poses=obj) for q, qdot, obj in zip(poses, velocities, objects)]
        metrics = score_sequence(model, sim, reference, states, fell=resets > 0, failsafe_resets=resets)
        report = MetricsReport(sequences=[metrics], seed=config.seed, config_hash=config.config_hash)
        if options.get("report"):
            write_report(options["report"], report)
        self.stdout.write(format_report(report))
