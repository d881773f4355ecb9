from harness_cli.management.base import PipelineCommand
from harness_cli.serializer import load_clips
from kin_policy.agent import KinAgent
from kin_policy.training import DYNREG_CHECKPOINT_NAME, SL_CHECKPOINT_NAME, train_dynamics_regulated, train_supervised
from uhc.agent import UHCAgent
from uhc.training import CHECKPOINT_NAME as UHC_CHECKPOINT_NAME


class Command(PipelineCommand):
    help = (
        "Train the kinematic policy: 'sl' runs supervised rollouts of the policy alone, "
        "'dynreg' trains it through a frozen UHC in simulation."
    )

    def add_command_arguments(self, parser):
        parser.add_argument("mode", choices=["sl", "dynreg"])
        parser.add_argument("--uhc", help="UHC checkpoint for dynreg (default <output_dir>/uhc.npz).")
        parser.add_argument("--init", help="Kinematic checkpoint to start from instead of a fresh policy.")

    def run(self, config, **options):
        model = self.load_model(config)
        clips = load_clips(config.dataset_glob, model)
        agent = None
        if options.get("init"):
            agent = KinAgent.from_checkpoint(self.checkpoint(options["init"], "kin", "--init"), model)

        with self.open_log(config, f"train_kin_{options['mode']}") as log:
            common = dict(
                output_dir=config.output_path,
                log=log,
                config_hash=config.config_hash,
                progress=options["progress"],
                agent=agent,
            )
            if options["mode"] == "sl":
                _, history = train_supervised(model, clips, config.kin, **common)
                name, summary = SL_CHECKPOINT_NAME, "sl_loss"
            else:
                uhc_path = options.get("uhc") or config.output_path / UHC_CHECKPOINT_NAME
                controller = UHCAgent.from_checkpoint(self.checkpoint(uhc_path, "uhc", "train_kin dynreg"), model)
                _, history = train_dynamics_regulated(
                    model, clips, controller, config.kin, scenes=self.scenes_for(clips),
                    sim_params=self.sim_params(config), **common,
                )
                name, summary = DYNREG_CHECKPOINT_NAME, "mean_reward"
        if history:
            self.stdout.write(f"final {summary} {history[-1][summary]:.5f}")
        self.stdout.write(f"checkpoint: {config.output_path / name}")
