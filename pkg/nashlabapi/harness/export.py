"""Long-format plot data from run records"""

import csv
import logging
from pathlib import Path

from nashlabapi.numerics.exceptions import ConfigurationError
from nashlabapi.numerics.solvers import METRICS

logger = logging.getLogger(__name__)

PLOT_COLUMNS = ("algorithm", "seed", "k", "value")


def check_metric(metric):
    if metric not in METRICS:
        raise ConfigurationError(f"unknown metric {metric!r}; valid metrics: {', '.join(METRICS)}")


def plot_rows(record, metric):
    check_metric(metric)
    return [(record.algorithm, record.seed, row.k, getattr(row, metric)) for row in record.rows]


def export_plot_data(records, metric, path=None):
    """`algorithm,seed,k,value` rows for every record, concatenated in order

    Raises:
        ConfigurationError -- Unknown metric, no records, or records of different instances
    """
    check_metric(metric)
    records = list(records)
    if not records:
        raise ConfigurationError("no run records to export")
    hashes = {record.instance_hash for record in records if record.instance_hash}
    if len(hashes) > 1:
        raise ConfigurationError("run records come from different instances")

    rows = []
    for record in records:
        rows.extend(plot_rows(record, metric))

    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(PLOT_COLUMNS)
            writer.writerows(rows)
        logger.info("exported %d %s rows to %s", len(rows), metric, path)
    return rows
