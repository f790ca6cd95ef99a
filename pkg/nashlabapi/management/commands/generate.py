import json
import os

from nashlabapi.harness.config import nashlab_setting
from nashlabapi.models import Instance
from nashlabapi.numerics.cournot import (
    CournotParams,
    generate_instance,
    instance_hash,
    strong_monotonicity_constants,
    to_document,
)

from ._base import NashlabCommand


class Command(NashlabCommand):
    help = "Generate a seeded Cournot market instance file"

    def add_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--num-companies", type=int, default=20, dest="num_companies")
        parser.add_argument("--num-markets", type=int, default=7, dest="num_markets")
        parser.add_argument("--demand-variance", type=float, dest="demand_variance")
        parser.add_argument("--uncoupled", action="store_true",
                            help="Drop the shared market caps")
        parser.add_argument("--out", help="Instance file, default under INSTANCES_ROOT")
        parser.add_argument("--persist", action="store_true", help="Also store it in the database")

    def handle(self, *args, **options):
        variance = options["demand_variance"]
        params = CournotParams(
            num_companies=options["num_companies"],
            num_markets=options["num_markets"],
            demand_variance=nashlab_setting("DEMAND_VARIANCE") if variance is None else variance,
            min_companies_per_market=min(2, options["num_companies"]),
        )
        instance = generate_instance(options["seed"], params, coupled=not options["uncoupled"])
        mu, lipschitz, _ = strong_monotonicity_constants(instance)
        document = to_document(instance)
        key = instance_hash(document)

        path = options["out"] or os.path.join(
            nashlab_setting("INSTANCES_ROOT"), f"{instance.game.name}-seed{options['seed']}.json"
        )
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle, indent=2, sort_keys=True)

        if options["persist"]:
            Instance.objects.get_or_create(
                instance_hash=key,
                defaults={
                    "name": instance.game.name,
                    "num_agents": instance.num_companies,
                    "num_markets": instance.num_markets,
                    "seed": options["seed"],
                    "document": document,
                },
            )
        self.stdout.write(f"{path} {key} mu={mu:.4f} L={lipschitz:.4f}")
