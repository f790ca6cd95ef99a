from django.core.management.base import CommandError

from nashlabapi.harness.config import load_config
from nashlabapi.harness.experiment import run_experiment

from ._base import (
    CONFIG_ERROR_CODE,
    NashlabCommand,
    add_override_arguments,
    overrides,
    report_cells,
)


class Command(NashlabCommand):
    help = "Run every algorithm and seed of a config and write the comparison tables"

    def add_arguments(self, parser):
        add_override_arguments(parser)
        parser.add_argument("--persist", action="store_true",
                            help="Record the experiment and cache references in the database")

    def handle(self, *args, **options):
        if not options["config"]:
            raise CommandError("compare needs --config", returncode=CONFIG_ERROR_CODE)
        config = load_config(options["config"], **overrides(options))
        result = run_experiment(config, persist=options["persist"])
        report_cells(self, result)
