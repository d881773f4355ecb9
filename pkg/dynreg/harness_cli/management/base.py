import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from dynreg.exceptions import DynregError, MissingDependencyError
from harness_cli.logs import JsonLinesLog
from harness_cli.serializer import load_run_config
from humanoid_model.loaders import load_model_file, load_scene_file
from nn_rl_core.checkpoints import load_checkpoint
from physics_sim.models import SimParams

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """Run-config loading and error reporting shared by the pipeline commands.

    Subclasses implement run(config, **options). Errors leave a record
    {error, kind, path, key, exit_code} on stderr and in <output_dir>/error.json,
    and the command exits with the error's code.
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("--config", help="RunConfig YAML or JSON file; every key defaults to the settings.")
        parser.add_argument("--output-dir", help="Directory for logs, checkpoints and reports.")
        parser.add_argument("--seed", type=int, help="Global seed; overrides the run config.")
        parser.add_argument("--workers", type=int, help="Rollout worker count; overrides the run config.")
        parser.add_argument("--progress", action="store_true", help="Show progress bars.")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        output_dir = options.get("output_dir")
        try:
            config = load_run_config(
                options.get("config"),
                output_dir=output_dir,
                seed=options.get("seed"),
                num_workers=options.get("workers"),
            )
            output_dir = config.output_dir
            options.pop("config", None)
            self.run(config, **options)
        except DynregError as exc:
            self.fail(exc, output_dir)
        except (CommandError, KeyboardInterrupt):
            raise
        except Exception as exc:
            logger.exception("%s failed", self.__module__.rsplit(".", 1)[-1])
            self.fail(DynregError(f"{type(exc).__name__}: {exc}"), output_dir)

    def run(self, config, **options):
        raise NotImplementedError

    def fail(self, exc, output_dir):
        record = {"path": None, "key": None, **exc.as_record()}
        text = json.dumps(record, sort_keys=True, default=str)
        self.stderr.write(text)
        if output_dir is not None:
            try:
                path = Path(output_dir) / "error.json"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text + "\n")
            except OSError:
                logger.warning("could not write error record to %s", output_dir)
        raise CommandError(str(exc), returncode=exc.exit_code)

    # shared plumbing

    def open_log(self, config, name):
        return JsonLinesLog(config.output_path / f"{name}.jsonl", config.config_hash)

    def load_model(self, config):
        return load_model_file(config.model)

    def sim_params(self, config):
        return SimParams.from_settings(pd_mode=config.pd_mode)

    def scenes_for(self, clips):
        return {name: load_scene_file(name) for name in sorted({clip.scene for clip in clips})}

    def checkpoint(self, path, kind, what):
        """Load a checkpoint that a previous stage must have written."""
        path = Path(path)
        if not path.exists():
            raise MissingDependencyError(f"{what} needs a {kind} checkpoint at {path}; run that stage first")
        return load_checkpoint(path, kind=kind)
