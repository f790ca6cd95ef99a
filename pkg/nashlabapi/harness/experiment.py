"""Experiment orchestration: one run per (algorithm, seed) cell

Every cell gets its own CSV and sidecar. A summary CSV holds one row per cell
and a comparison CSV aggregates the cells per algorithm.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from django.utils import timezone

from nashlabapi.numerics.cournot import (
    CournotParams,
    from_document,
    generate_instance,
    instance_hash,
    strong_monotonicity_constants,
    to_document,
)
from nashlabapi.numerics.exceptions import (
    ConfigurationError,
    DivergenceError,
    NashlabError,
    NumericalError,
)
from nashlabapi.numerics.operators import extragradient_step_sizes, max_step_sizes
from nashlabapi.numerics.sampling import BatchSchedule, StepSchedule
from nashlabapi.numerics.solvers import (
    Algorithm,
    DictReferenceCache,
    SolverConfig,
    compute_reference,
    default_gamma,
    run,
)

from .config import dump_config, nashlab_setting
from .records import write_record

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("algorithm", "seed", "status", "iterations", "final_rel_dist",
                   "final_dual_disagreement", "final_kkt_stat", "oracle_calls", "samples",
                   "elapsed_ns", "calls_to_target", "error")
COMPARISON_COLUMNS = ("algorithm", "runs", "completed", "mean_final_rel_dist",
                      "max_final_rel_dist", "total_oracle_calls", "mean_calls_to_target",
                      "total_elapsed_ns")


@dataclass
class CellResult:
    algorithm: str
    seed: int
    status: str
    record: Optional[object] = None
    csv_path: Optional[Path] = None
    error: Optional[str] = None

    @property
    def failed(self):
        return self.status in ("failed", "diverged")

    def summary_row(self, target):
        record = self.record
        if record is None or not record.rows:
            return {"algorithm": self.algorithm, "seed": self.seed, "status": self.status,
                    "iterations": 0, "final_rel_dist": math.nan,
                    "final_dual_disagreement": math.nan, "final_kkt_stat": math.nan,
                    "oracle_calls": 0, "samples": 0, "elapsed_ns": 0, "calls_to_target": None,
                    "error": self.error}
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "status": self.status,
            "iterations": record.iterations,
            "final_rel_dist": record.final("rel_dist"),
            "final_dual_disagreement": record.final("dual_disagreement"),
            "final_kkt_stat": record.final("kkt_stat"),
            "oracle_calls": record.total_oracle_calls,
            "samples": record.total_samples,
            "elapsed_ns": int(record.final("elapsed_ns")),
            "calls_to_target": record.calls_to_accuracy(target),
            "error": self.error,
        }


@dataclass
class ExperimentResult:
    config: object
    instance_hash: str
    cells: list = field(default_factory=list)
    summary_path: Optional[Path] = None
    comparison_path: Optional[Path] = None
    experiment: Optional[object] = None

    @property
    def failures(self):
        return [cell for cell in self.cells if cell.failed]

    @property
    def all_failed(self):
        return bool(self.cells) and len(self.failures) == len(self.cells)

    def comparison(self):
        return compare_algorithms(self.cells, self.config.target_accuracy)


def load_instance(spec):
    """CournotInstance from the `instance` section of a config"""
    if spec.get("path"):
        path = Path(spec["path"])
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except OSError as ex:
            raise ConfigurationError(f"cannot read instance {path}: {ex.strerror}",
                                     "instance.path") from ex
        except json.JSONDecodeError as ex:
            raise ConfigurationError(f"{path}: line {ex.lineno} column {ex.colno}: {ex.msg}",
                                     "instance.path") from ex
        instance = from_document(document)
        return instance if spec.get("coupled", True) else instance.without_coupling()

    params = CournotParams(
        num_companies=spec["num_companies"],
        num_markets=spec["num_markets"],
        demand_variance=spec["demand_variance"],
        min_companies_per_market=min(2, spec["num_companies"]),
    )
    return generate_instance(spec["seed"], params, coupled=spec.get("coupled", True))


def variant_for(instance, algorithm):
    """Plain Nash modes run on the market without its shared caps"""
    return instance.without_coupling() if Algorithm(algorithm).is_snep else instance


def initial_step(entry, instance):
    """gamma0 of the entry's step schedule, or the largest certified primal step"""
    step = entry.get("step") or {}
    if step.get("gamma0") is not None:
        return step["gamma0"]
    gamma = entry.get("gamma") or default_gamma(instance.game, instance.graph,
                                                margin=nashlab_setting("STEP_MARGIN"))
    return float(max_step_sizes(instance.game, instance.graph, gamma).alpha.max())


def build_solver_config(entry, instance, seed):
    """SolverConfig for one algorithm entry of a validated config

    Constant steps follow the certified gamma unless the entry fixes one; FBF
    and EG steps are additionally shrunk below the inverse Lipschitz constant
    of the extended operator. A step schedule without gamma0 starts from the
    largest certified primal step.
    """
    algorithm = Algorithm(entry["name"])
    game, graph = instance.game, instance.graph
    steps = schedule = batch = rho = None

    if entry.get("batch"):
        batch = BatchSchedule(**entry["batch"])
    if algorithm.is_snep:
        _, _, beta = strong_monotonicity_constants(instance)
        schedule = StepSchedule(gamma0=initial_step(entry, instance), eta=entry["step"]["eta"],
                                cap=2.0 * beta)
    else:
        gamma = entry.get("gamma") or default_gamma(game, graph,
                                                    margin=nashlab_setting("STEP_MARGIN"))
        steps = max_step_sizes(game, graph, gamma).scaled(entry.get("step_scale", 1.0))
        if algorithm in (Algorithm.FBF, Algorithm.EG):
            _, lipschitz, _ = strong_monotonicity_constants(instance)
            steps = extragradient_step_sizes(steps, game, graph, lipschitz)
            rho = steps.alpha * entry.get("rho_scale", 1.0)
        if entry.get("step"):
            schedule = StepSchedule(gamma0=initial_step(entry, instance),
                                    eta=entry["step"]["eta"])

    return SolverConfig(
        algorithm=algorithm,
        steps=steps,
        step_schedule=schedule,
        batch=batch,
        max_iters=entry["max_iters"],
        tol=entry.get("tol"),
        stop_metric=entry.get("stop_metric", "rel_dist"),
        seed=seed,
        rho=rho,
        experimental=entry.get("experimental", False),
        divergence_threshold=nashlab_setting("DIVERGENCE_THRESHOLD"),
    )


def reference_for(instance, config, cache):
    document = to_document(instance)
    key = instance_hash(document)
    reference = compute_reference(instance.game, instance.graph, tol=config.reference_tol,
                                  max_iters=config.reference_max_iters, cache=cache, key=key)
    return key, reference


def run_cell(entry, seed, instance, reference, key, output_dir):
    """Run one (algorithm, seed) cell; failures are recorded, never raised"""
    algorithm = entry["name"]
    logger.info("cell %s seed %s", algorithm, seed)
    try:
        solver_config = build_solver_config(entry, instance, seed)
        record = run(solver_config, instance.game, instance.graph, reference,
                     stream=instance.demand_stream(seed))
        error = None
    except (DivergenceError, NumericalError) as ex:
        record, error = ex.record, str(ex)
    except NashlabError as ex:
        logger.exception("cell %s seed %s failed", algorithm, seed)
        return CellResult(algorithm, seed, "failed", error=str(ex))

    record.instance_hash = key
    csv_path = write_record(record, output_dir)
    return CellResult(algorithm, seed, record.status, record, csv_path, error)


def compare_algorithms(cells, target):
    """Per-algorithm aggregate of the cells, in first-seen order"""
    grouped = {}
    for cell in cells:
        grouped.setdefault(cell.algorithm, []).append(cell)

    rows = []
    for algorithm, group in grouped.items():
        summaries = [cell.summary_row(target) for cell in group]
        finals = [row["final_rel_dist"] for row in summaries if not math.isnan(row["final_rel_dist"])]
        reached = [row["calls_to_target"] for row in summaries if row["calls_to_target"] is not None]
        rows.append({
            "algorithm": algorithm,
            "runs": len(group),
            "completed": sum(1 for cell in group if not cell.failed),
            "mean_final_rel_dist": float(np.mean(finals)) if finals else math.nan,
            "max_final_rel_dist": float(np.max(finals)) if finals else math.nan,
            "total_oracle_calls": sum(row["oracle_calls"] for row in summaries),
            "mean_calls_to_target": float(np.mean(reached)) if reached else None,
            "total_elapsed_ns": sum(row["elapsed_ns"] for row in summaries),
        })
    return rows


def _write_table(path, columns, rows):
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _persist(config, instance, key, result):
    from nashlabapi.models import Experiment, Instance, Run

    stored_instance, _ = Instance.objects.get_or_create(
        instance_hash=key,
        defaults={
            "name": instance.game.name,
            "num_agents": instance.num_companies,
            "num_markets": instance.num_markets,
            "seed": instance.seed,
            "document": to_document(instance),
        },
    )
    experiment = Experiment.objects.create(
        name=config.name,
        config=config.as_dict(),
        instance=stored_instance,
        output_dir=config.output_dir,
        status="failed" if result.all_failed else "partial" if result.failures else "completed",
        completed_date=timezone.now(),
    )
    for cell in result.cells:
        row = cell.summary_row(config.target_accuracy)
        Run.objects.create(
            experiment=experiment,
            algorithm=cell.algorithm,
            seed=cell.seed,
            status=cell.status,
            iterations=row["iterations"],
            final_rel_dist=None if math.isnan(row["final_rel_dist"]) else row["final_rel_dist"],
            final_dual_disagreement=(None if math.isnan(row["final_dual_disagreement"])
                                     else row["final_dual_disagreement"]),
            oracle_calls=row["oracle_calls"],
            samples=row["samples"],
            elapsed_ns=row["elapsed_ns"],
            calls_to_target=row["calls_to_target"],
            csv_path=str(cell.csv_path or ""),
            error=cell.error or "",
        )
    return experiment


def run_experiment(config, cache=None, persist=False):
    """Run every (algorithm, seed) cell of `config` against one instance

    Writes the effective config, one CSV and sidecar per cell, summary.csv and
    comparison.csv into the output directory. Cell failures are recorded in
    the summary and do not stop the other cells.

    Raises:
        ConfigurationError -- Instance cannot be built
        ConvergenceError -- A reference solution could not be computed
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, output_dir / "config.json")
    if cache is None:
        if persist:
            from .cache import OrmReferenceCache
            cache = OrmReferenceCache()
        else:
            cache = DictReferenceCache()

    base = load_instance(config.instance)
    variants, references = {}, {}
    for entry in config.algorithms:
        instance = variant_for(base, entry["name"])
        if instance.coupled not in references:
            variants[instance.coupled] = instance
            references[instance.coupled] = reference_for(instance, config, cache)

    jobs = []
    for entry in config.algorithms:
        instance = variants[variant_for(base, entry["name"]).coupled]
        key, reference = references[instance.coupled]
        jobs.extend((entry, seed, instance, reference, key, output_dir) for seed in config.seeds)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            cells = list(pool.map(lambda job: run_cell(*job), jobs))
    else:
        cells = [run_cell(*job) for job in jobs]

    base_key = references.get(base.coupled, (instance_hash(to_document(base)), None))[0]
    result = ExperimentResult(config=config, instance_hash=base_key, cells=cells)
    result.summary_path = _write_table(
        output_dir / "summary.csv", SUMMARY_COLUMNS,
        [cell.summary_row(config.target_accuracy) for cell in cells],
    )
    result.comparison_path = _write_table(output_dir / "comparison.csv", COMPARISON_COLUMNS,
                                          result.comparison())
    if persist:
        result.experiment = _persist(config, base, base_key, result)

    for cell in result.failures:
        logger.warning("cell %s seed %s %s: %s", cell.algorithm, cell.seed, cell.status,
                       cell.error)
    logger.info("experiment %s: %d cells, %d failed", config.name, len(cells),
                len(result.failures))
    return result
