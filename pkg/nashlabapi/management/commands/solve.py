from django.core.management.base import CommandError

from nashlabapi.harness.cache import OrmReferenceCache
from nashlabapi.harness.config import load_config, parse_config
from nashlabapi.harness.experiment import load_instance, reference_for, run_experiment, variant_for
from nashlabapi.harness.tuning import scaled_entry, tune_step_scale
from nashlabapi.numerics.solvers import DictReferenceCache

from ._base import (
    CONFIG_ERROR_CODE,
    NashlabCommand,
    add_override_arguments,
    overrides,
    report_cells,
)


class Command(NashlabCommand):
    help = "Run one algorithm on one instance; every seed gets its own CSV"

    def add_arguments(self, parser):
        add_override_arguments(parser)
        parser.add_argument("--instance", help="Instance file, instead of a generated one")
        parser.add_argument("--instance-seed", type=int, default=0, dest="instance_seed")
        parser.add_argument("--tune", action="store_true",
                            help="Pick each algorithm's step scale on the first seed before running")
        parser.add_argument("--persist", action="store_true",
                            help="Record the experiment and cache references in the database")

    def handle(self, *args, **options):
        if options["config"]:
            config = load_config(options["config"], **overrides(options))
        else:
            if not options["algo"]:
                raise CommandError("solve needs --config or --algo", returncode=CONFIG_ERROR_CODE)
            source = ({"path": options["instance"]} if options["instance"]
                      else {"seed": options["instance_seed"]})
            config = parse_config({"instance": source, "algorithms": [{"name": options["algo"]}]},
                                  **overrides(options))
        cache = OrmReferenceCache() if options["persist"] else DictReferenceCache()
        if options["tune"]:
            config = self.tuned(config, cache)
        result = run_experiment(config, cache=cache, persist=options["persist"])
        report_cells(self, result)

    def tuned(self, config, cache):
        """Config with every entry at the step scale that ends closest to the reference"""
        base = load_instance(config.instance)
        entries = []
        for entry in config.algorithms:
            instance = variant_for(base, entry["name"])
            _, reference = reference_for(instance, config, cache)
            tuning = tune_step_scale(entry, instance, reference, seed=config.seeds[0])
            for trial in tuning.trials:
                self.stdout.write(f"{entry['name']:<26} scale={trial.scale:<6g} "
                                  f"{trial.status:<10} rel_dist={trial.final_rel_dist:.3e}")
            self.stdout.write(f"{entry['name']:<26} best scale={tuning.best_scale:g}")
            entries.append(scaled_entry(entry, instance, tuning.best_scale))
        return parse_config(dict(config.as_dict(), algorithms=entries))
