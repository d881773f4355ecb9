from harness_cli.management.base import PipelineCommand
from harness_cli.serializer import load_clips
from humanoid_model.loaders import load_scene_file
from uhc.agent import UHCAgent
from uhc.training import CHECKPOINT_NAME, train_uhc


class Command(PipelineCommand):
    help = "Train the universal humanoid controller on the training clips."

    def add_command_arguments(self, parser):
        parser.add_argument("--resume", help="UHC checkpoint to continue from.")

    def run(self, config, **options):
        model = self.load_model(config)
        clips = load_clips(config.dataset_glob, model)
        agent, start = None, 0
        if options.get("resume"):
            checkpoint = self.checkpoint(options["resume"], "uhc", "--resume")
            agent = UHCAgent.from_checkpoint(checkpoint, model)
            start = int(checkpoint.extra.get("iteration", 0))
        with self.open_log(config, "train_uhc") as log:
            _, history = train_uhc(
                model,
                clips,
                config.uhc,
                scene=load_scene_file(config.scene),
                sim_params=self.sim_params(config),
                output_dir=config.output_path,
                log=log,
                config_hash=config.config_hash,
                progress=options["progress"],
                agent=agent,
                start_iteration=start,
            )
        if history:
            self.stdout.write(f"final mean reward {history[-1]['mean_reward']:.4f}")
        self.stdout.write(f"checkpoint: {config.output_path / CHECKPOINT_NAME}")
