from dynreg.exceptions import AcceptanceError
from harness_cli.management.base import PipelineCommand
from metrics_eval.models import MetricsReport
from metrics_eval.report import format_per_joint, format_report, format_summary, summarize
from metrics_eval.serializer import read_report


class Command(PipelineCommand):
    help = "Print one metrics report, or the mean ± std over several (one per seed)."

    def add_command_arguments(self, parser):
        parser.add_argument("reports", nargs="+", help="MetricsReport JSON files.")
        parser.add_argument("--per-joint", action="store_true", help="Print the per-joint MPJPE breakdown.")
        parser.add_argument("--min-success", type=float, help="Exit with code 3 below this mean success rate.")

    def run(self, config, **options):
        reports = [read_report(path) for path in options["reports"]]
        if len(reports) == 1:
            self.stdout.write(format_report(reports[0]))
        else:
            self.stdout.write(format_summary(summarize(reports), len(reports)))
        if options["per_joint"]:
            merged = MetricsReport(sequences=[s for r in reports for s in r.sequences])
            self.stdout.write(format_per_joint(merged))

        success = summarize(reports)["success"]["mean"]
        if options.get("min_success") is not None and success < options["min_success"]:
            raise AcceptanceError(f"mean success {success:.3f} is below the required {options['min_success']:.3f}")
