import json

from django.core.management.base import CommandError

from nashlabapi.harness.verification import verify_instance
from nashlabapi.numerics.cournot import CournotParams, from_document, generate_instance
from nashlabapi.numerics.exceptions import ConfigurationError

from ._base import FAILURE_CODE, NashlabCommand


class Command(NashlabCommand):
    help = "Check operator, step-size and sampling properties on an instance"

    def add_arguments(self, parser):
        parser.add_argument("--instance", help="Instance file; a generated market otherwise")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--num-companies", type=int, default=20, dest="num_companies")
        parser.add_argument("--num-markets", type=int, default=7, dest="num_markets")
        parser.add_argument("--pairs", type=int, default=1000)
        parser.add_argument("--trials", type=int, default=200)

    def handle(self, *args, **options):
        if options["instance"]:
            try:
                with open(options["instance"], encoding="utf-8") as handle:
                    instance = from_document(json.load(handle))
            except (OSError, json.JSONDecodeError) as ex:
                raise ConfigurationError(f"cannot load {options['instance']}: {ex}") from ex
        else:
            params = CournotParams(num_companies=options["num_companies"],
                                   num_markets=options["num_markets"],
                                   min_companies_per_market=min(2, options["num_companies"]))
            instance = generate_instance(options["seed"], params)

        report = verify_instance(instance, seed=options["seed"], pairs=options["pairs"],
                                 trials=options["trials"])
        self.stdout.write(report.as_table())
        if not report.passed:
            raise CommandError(f"{len(report.failures())} checks failed", returncode=FAILURE_CODE)
