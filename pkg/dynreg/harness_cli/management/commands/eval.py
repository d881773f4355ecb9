import numpy as np

from dynreg.exceptions import AcceptanceError
from harness_cli.management.base import PipelineCommand
from harness_cli.serializer import load_clips
from harness_cli.synthetic import perturb_context
from humanoid_model.loaders import load_scene_file
from kin_policy.agent import KinAgent
from kin_policy.evaluation import evaluate_kin
from kin_policy.training import DYNREG_CHECKPOINT_NAME
from metrics_eval.report import format_per_joint, format_report, format_summary, summarize
from metrics_eval.serializer import write_report
from uhc.agent import PlaybackController, UHCAgent
from uhc.evaluation import imitation_eval
from uhc.training import CHECKPOINT_NAME as UHC_CHECKPOINT_NAME


def context_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2,)))


class Command(PipelineCommand):
    help = (
        "Evaluate on the held-out clips. 'kin' runs the kinematic policy through the controller with the "
        "fail-safe armed; 'imitation' has the controller track the ground truth. Writes one report per seed."
    )

    def add_command_arguments(self, parser):
        parser.add_argument("--target", choices=["kin", "imitation"], default="kin")
        parser.add_argument("--checkpoint", help="Kinematic checkpoint (default <output_dir>/kin_dynreg.npz).")
        parser.add_argument("--uhc", help="UHC checkpoint (default <output_dir>/uhc.npz).")
        parser.add_argument("--playback", action="store_true",
                            help="Replace the controller with ground-truth playback (no dynamics).")
        parser.add_argument("--clips", help="Glob of clips to evaluate (default: the held-out clips).")
        parser.add_argument("--seeds", type=int, help="Number of seeds, starting at the run seed.")
        parser.add_argument("--min-success", type=float, help="Exit with code 3 below this mean success rate.")
        parser.add_argument("--per-joint", action="store_true", help="Print the per-joint MPJPE breakdown.")
        parser.add_argument("--dump", action="store_true", help="Write trajectory dumps of kin rollouts.")

    def run(self, config, **options):
        model = self.load_model(config)
        clips = load_clips(options.get("clips") or config.held_out_glob, model)
        params = self.sim_params(config)
        seeds = options.get("seeds") or config.eval.seeds
        min_success = options.get("min_success")
        min_success = config.eval.min_success if min_success is None else min_success

        if options["playback"]:
            controller = PlaybackController()
        else:
            uhc_path = options.get("uhc") or config.output_path / UHC_CHECKPOINT_NAME
            controller = UHCAgent.from_checkpoint(self.checkpoint(uhc_path, "uhc", "eval"), model)
        agent = None
        if options["target"] == "kin":
            kin_path = options.get("checkpoint") or config.output_path / DYNREG_CHECKPOINT_NAME
            agent = KinAgent.from_checkpoint(self.checkpoint(kin_path, "kin", "eval --target kin"), model)

        reports = []
        with self.open_log(config, "eval") as log:
            for seed in range(config.seed, config.seed + seeds):
                rng = context_rng(seed)
                perturbed = [perturb_context(clip, rng, config.eval.context_noise_std) for clip in clips]
                if agent is not None:
                    dump_dir = config.output_path / "dumps" / f"seed_{seed}" if options["dump"] else None
                    report = evaluate_kin(
                        agent, controller, perturbed, self.scenes_for(perturbed), params, config.eval.threshold,
                        seed=seed, config_hash=config.config_hash, dump_dir=dump_dir,
                    )
                else:
                    report = imitation_eval(
                        controller, model, perturbed, load_scene_file(config.scene), params,
                        config.eval.threshold, seed=seed, config_hash=config.config_hash,
                    )
                path = write_report(config.output_path / "reports" / f"{options['target']}_seed_{seed}.json", report)
                log.write("eval", seed, target=options["target"], report=str(path), **report.aggregate())
                reports.append(report)

        if len(reports) == 1:
            self.stdout.write(format_report(reports[0]))
        else:
            self.stdout.write(format_summary(summarize(reports), len(reports)))
        if options["per_joint"]:
            for report in reports:
                self.stdout.write(format_per_joint(report))

        success = float(np.mean([r.aggregate()["success"] for r in reports]))
        if min_success is not None and success < min_success:
            raise AcceptanceError(f"mean success {success:.3f} is below the required {min_success:.3f}")
