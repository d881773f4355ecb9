from harness_cli.management.base import PipelineCommand
from harness_cli.synthetic import gen_synthetic_dataset, write_dataset


class Command(PipelineCommand):
    help = "Script the synthetic motion dataset into <output_dir>/clips/{train,held_out}."

    def run(self, config, **options):
        model = self.load_model(config)
        train, held_out = gen_synthetic_dataset(model, config.synthetic, config.seed, config.config_hash)
        paths = write_dataset(config.clips_dir, train, held_out)
        with self.open_log(config, "gen_data") as log:
            log.write("gen_data", None, model=model.name, train=len(train), held_out=len(held_out))
        self.stdout.write(f"wrote {len(paths)} motion files to {config.clips_dir}")
