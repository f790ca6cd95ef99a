"""Run records on disk: one CSV per run plus a JSON sidecar"""

import csv
import json
import logging
from pathlib import Path

from nashlabapi.numerics.exceptions import ConfigurationError
from nashlabapi.numerics.solvers import CSV_COLUMNS, RunRecord, RunRow

logger = logging.getLogger(__name__)

INTEGER_COLUMNS = ("k", "oracle_calls", "samples", "elapsed_ns")
TIMING_COLUMNS = ("elapsed_ns",)


def record_stem(algorithm, seed):
    return f"{algorithm}_seed{seed}"


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def write_record(record, directory):
    """Write <algorithm>_seed<seed>.csv and its sidecar; returns the CSV path"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{record_stem(record.algorithm, record.seed)}.csv"

    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in record.rows:
            writer.writerow(row.as_tuple())

    sidecar = {
        "algorithm": record.algorithm,
        "seed": record.seed,
        "status": record.status,
        "error": record.error,
        "iterations": record.iterations,
        "instance_hash": record.instance_hash,
        "columns": list(CSV_COLUMNS),
        "config": record.config,
    }
    sidecar_path(csv_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    logger.debug("wrote %d rows to %s", record.iterations, csv_path)
    return csv_path


def _parse_row(values):
    parsed = {}
    for column, value in zip(CSV_COLUMNS, values):
        parsed[column] = int(value) if column in INTEGER_COLUMNS else float(value)
    return RunRow(**parsed)


def read_record(csv_path):
    """Load a run CSV back into a RunRecord, with metadata from its sidecar

    Raises:
        ConfigurationError -- Missing file or a header that is not the run header
    """
    csv_path = Path(csv_path)
    try:
        with csv_path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = tuple(next(reader, ()))
            if header != CSV_COLUMNS:
                raise ConfigurationError(f"{csv_path} is not a run record (header {header})")
            rows = [_parse_row(values) for values in reader if values]
    except OSError as ex:
        raise ConfigurationError(f"cannot read run record {csv_path}: {ex.strerror}") from ex

    meta = {}
    if sidecar_path(csv_path).exists():
        meta = json.loads(sidecar_path(csv_path).read_text(encoding="utf-8"))
    return RunRecord(
        algorithm=meta.get("algorithm", csv_path.stem.rsplit("_seed", 1)[0]),
        seed=meta.get("seed", -1),
        config=meta.get("config", {}),
        rows=rows,
        status=meta.get("status", "completed"),
        instance_hash=meta.get("instance_hash"),
        error=meta.get("error"),
    )


def find_records(directory):
    """Run CSVs of an output directory, i.e. every CSV with a sidecar"""
    return sorted(path for path in Path(directory).glob("*.csv") if sidecar_path(path).exists())


def comparable_rows(csv_path, exclude=TIMING_COLUMNS):
    """CSV rows without the timing columns, for determinism checks"""
    with Path(csv_path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        keep = [index for index, column in enumerate(header) if column not in exclude]
        return [[row[index] for index in keep] for row in reader]
