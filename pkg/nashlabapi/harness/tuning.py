"""Grid search over the step scale of one algorithm"""

import logging
import math
from dataclasses import dataclass, field

from nashlabapi.numerics.exceptions import (
    ConvergenceError,
    DivergenceError,
    NashlabError,
    NumericalError,
)
from nashlabapi.numerics.solvers import Algorithm, run

from .experiment import build_solver_config, initial_step, variant_for

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class Trial:
    scale: float
    status: str
    final_rel_dist: float


@dataclass
class TuningResult:
    best_scale: float
    trials: list = field(default_factory=list)


def scaled_entry(entry, instance, scale):
    """Copy of `entry` with its steps scaled by `scale`; gamma0 for vanishing-step modes"""
    if Algorithm(entry["name"]).is_snep:
        gamma0 = initial_step(entry, variant_for(instance, entry["name"]))
        return dict(entry, step=dict(entry["step"], gamma0=gamma0 * scale))
    return dict(entry, step_scale=scale)


def tune_step_scale(entry, instance, reference, seed=0, scales=DEFAULT_SCALES, max_iters=None):
    """Try each step scale on one seed and keep the best stable one

    Vanishing-step modes scale gamma0 instead. Scales that diverge or fail
    are discarded; the rest are ranked by final relative distance, larger
    scales first on ties. `reference` must belong to the game the algorithm
    runs on (the uncoupled market for the plain Nash modes).

    Raises:
        ConvergenceError -- No scale ran without diverging
    """
    instance = variant_for(instance, entry["name"])
    trials = []
    for scale in sorted(scales):
        candidate = scaled_entry(entry, instance, scale)
        if max_iters is not None:
            candidate["max_iters"] = max_iters
        try:
            record = run(build_solver_config(candidate, instance, seed), instance.game,
                         instance.graph, reference, stream=instance.demand_stream(seed))
            trials.append(Trial(scale, record.status, record.final("rel_dist")))
        except (DivergenceError, NumericalError) as ex:
            trials.append(Trial(scale, ex.record.status if ex.record else "failed", math.inf))
        except NashlabError as ex:
            logger.warning("scale %s rejected: %s", scale, ex)
            trials.append(Trial(scale, "failed", math.inf))
        logger.info("%s scale %s -> %s (%.3e)", entry["name"], scale, trials[-1].status,
                    trials[-1].final_rel_dist)

    stable = [trial for trial in trials if trial.status in ("completed", "converged")]
    if not stable:
        raise ConvergenceError(f"{entry['name']}: every step scale in {sorted(scales)} diverged")
    best = min(stable, key=lambda trial: (trial.final_rel_dist, -trial.scale))
    return TuningResult(best_scale=best.scale, trials=trials)
