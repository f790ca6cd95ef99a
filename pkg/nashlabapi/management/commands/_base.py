"""Shared error handling and flags for the nashlab management commands"""

import logging

from django.core.management.base import BaseCommand, CommandError

from nashlabapi.numerics.exceptions import ConfigurationError, NashlabError

logger = logging.getLogger(__name__)

CONFIG_ERROR_CODE = 2
FAILURE_CODE = 1


class NashlabCommand(BaseCommand):
    """Maps configuration errors to exit code 2 and other failures to 1"""

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except ConfigurationError as ex:
            raise CommandError(f"configuration error: {ex}", returncode=CONFIG_ERROR_CODE) from ex
        except NashlabError as ex:
            logger.debug("command failed", exc_info=True)
            raise CommandError(str(ex), returncode=FAILURE_CODE) from ex


def add_override_arguments(parser):
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="Run a single sampling seed")
    parser.add_argument("--algo", help="Run a single algorithm")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--tol", type=float)


def overrides(options):
    return {key: options.get(key) for key in ("seed", "algo", "out", "max_iters", "tol")}


def report_cells(command, result):
    """Print the per-algorithm comparison and fail with code 1 if any cell failed"""
    for row in result.comparison():
        command.stdout.write(
            f"{row['algorithm']:<26} runs={row['runs']} ok={row['completed']} "
            f"rel_dist={row['mean_final_rel_dist']:.3e} calls={row['total_oracle_calls']} "
            f"calls_to_target={row['mean_calls_to_target']}"
        )
    command.stdout.write(f"summary: {result.summary_path}")
    if result.failures:
        raise CommandError(
            f"{len(result.failures)} of {len(result.cells)} runs failed; see {result.summary_path}",
            returncode=FAILURE_CODE,
        )
