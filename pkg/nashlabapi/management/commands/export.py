from pathlib import Path

from django.core.management.base import CommandError

from nashlabapi.harness.export import export_plot_data
from nashlabapi.harness.records import find_records, read_record
from nashlabapi.models import Experiment

from ._base import CONFIG_ERROR_CODE, NashlabCommand


class Command(NashlabCommand):
    help = "Write long-format algorithm,seed,k,value rows for one metric"

    def add_arguments(self, parser):
        parser.add_argument("--metric", default="rel_dist")
        parser.add_argument("--runs", help="Experiment output directory")
        parser.add_argument("--experiment", type=int, help="Stored experiment id")
        parser.add_argument("--algo", help="Only export this algorithm")
        parser.add_argument("--out", help="Plot data file, default <runs>/<metric>.csv")

    def handle(self, *args, **options):
        if options["experiment"] is not None:
            try:
                experiment = Experiment.objects.get(pk=options["experiment"])
            except Experiment.DoesNotExist as ex:
                raise CommandError(ex.args[0], returncode=CONFIG_ERROR_CODE) from ex
            paths = [Path(run.csv_path) for run in experiment.runs.all() if run.csv_path]
            directory = Path(experiment.output_dir)
        elif options["runs"]:
            directory = Path(options["runs"])
            paths = find_records(directory)
        else:
            raise CommandError("export needs --runs or --experiment", returncode=CONFIG_ERROR_CODE)

        records = [read_record(path) for path in paths]
        if options["algo"]:
            records = [record for record in records if record.algorithm == options["algo"]]
        out = options["out"] or directory / f"{options['metric']}.csv"
        rows = export_plot_data(records, options["metric"], out)
        self.stdout.write(f"{out}: {len(rows)} rows from {len(records)} runs")
