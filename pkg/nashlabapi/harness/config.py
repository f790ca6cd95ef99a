"""Experiment configuration: loading, overrides and validation

Documents are JSON with nested sections. Each section has its own serializer;
unknown keys are rejected at every level and every error carries the dotted
key path of the entry that caused it.
"""

import copy
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from nashlabapi.numerics.exceptions import ConfigurationError
from nashlabapi.numerics.solvers import METRICS, Algorithm

logger = logging.getLogger(__name__)

DEFAULTS = {
    "RUNS_ROOT": "runs",
    "INSTANCES_ROOT": "instances",
    "DEMAND_VARIANCE": 0.1,
    "REFERENCE_TOLERANCE": 1e-10,
    "REFERENCE_MAX_ITERS": 10 ** 7,
    "DIVERGENCE_THRESHOLD": 1e6,
    "STEP_MARGIN": 1.05,
    "DEFAULT_MAX_ITERS": 3000,
}

SAA_ALGORITHMS = (Algorithm.STOCH_FB_SAA.value, Algorithm.SNE_FB_SAA.value)
SNEP_ALGORITHMS = (Algorithm.SNE_FB_SA.value, Algorithm.SNE_FB_SAA.value)
SINGLE_SAMPLE_ALGORITHMS = (Algorithm.DET_FB.value, Algorithm.SNE_FB_SA.value,
                            Algorithm.STOCH_FB_SA_EXPERIMENTAL.value)

# Filled in when a sample-average or plain Nash entry leaves its section out.
# gamma0 None is derived from the instance when the solver config is built.
DEFAULT_BATCH = {"c": 1.0, "k0": 1.0, "a": 1.0, "max_size": None}
DEFAULT_STEP = {"gamma0": None, "eta": 0.6}


def nashlab_setting(name):
    return getattr(settings, "NASHLAB", {}).get(name, DEFAULTS[name])


class StrictSerializer(serializers.Serializer):
    """Serializer that refuses keys it does not declare"""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["unknown key"] for key in unknown})
        return super().to_internal_value(data)


def _positive(value):
    if value is not None and not value > 0:
        raise serializers.ValidationError("must be positive")
    return value


class InstanceSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, allow_null=True, default=None)
    path = serializers.CharField(allow_null=True, default=None)
    num_companies = serializers.IntegerField(min_value=1, default=20)
    num_markets = serializers.IntegerField(min_value=1, default=7)
    demand_variance = serializers.FloatField(
        min_value=0.0, default=lambda: nashlab_setting("DEMAND_VARIANCE")
    )
    coupled = serializers.BooleanField(default=True)

    def validate(self, attrs):
        if (attrs["seed"] is None) == (attrs["path"] is None):
            raise serializers.ValidationError(
                {"seed": ["give exactly one of `seed` (generate) or `path` (load from file)"]}
            )
        return attrs


class BatchSerializer(StrictSerializer):
    c = serializers.FloatField(default=1.0, validators=[_positive])
    k0 = serializers.FloatField(default=1.0, validators=[_positive])
    a = serializers.FloatField(default=1.0, validators=[_positive])
    max_size = serializers.IntegerField(min_value=1, allow_null=True, default=None)


class StepSerializer(StrictSerializer):
    gamma0 = serializers.FloatField(allow_null=True, default=None, validators=[_positive])
    eta = serializers.FloatField(default=0.6)

    def validate_eta(self, value):
        if not 0.5 < value <= 1.0:
            raise serializers.ValidationError("must lie in (0.5, 1]")
        return value


class AlgorithmSerializer(StrictSerializer):
    name = serializers.ChoiceField(choices=[algorithm.value for algorithm in Algorithm])
    gamma = serializers.FloatField(allow_null=True, default=None, validators=[_positive])
    step_scale = serializers.FloatField(default=1.0, validators=[_positive])
    rho_scale = serializers.FloatField(default=1.0, validators=[_positive])
    batch = BatchSerializer(allow_null=True, default=None)
    step = StepSerializer(allow_null=True, default=None)
    max_iters = serializers.IntegerField(
        min_value=1, default=lambda: nashlab_setting("DEFAULT_MAX_ITERS")
    )
    tol = serializers.FloatField(allow_null=True, default=None, validators=[_positive])
    stop_metric = serializers.ChoiceField(choices=list(METRICS), default="rel_dist")
    experimental = serializers.BooleanField(default=False)

    def validate(self, attrs):
        name = attrs["name"]
        if name in SAA_ALGORITHMS and attrs["batch"] is None:
            attrs["batch"] = dict(DEFAULT_BATCH)
        if name in SINGLE_SAMPLE_ALGORITHMS and attrs["batch"] is not None:
            raise serializers.ValidationError({"batch": [f"{name} draws no batches"]})
        if name in SNEP_ALGORITHMS and attrs["step"] is None:
            attrs["step"] = dict(DEFAULT_STEP)
        if name == Algorithm.STOCH_FB_SA_EXPERIMENTAL.value and not attrs["experimental"]:
            raise serializers.ValidationError(
                {"experimental": ["this mode carries no convergence guarantee; set true to opt in"]}
            )
        return attrs


class ExperimentSerializer(StrictSerializer):
    name = serializers.CharField(default="experiment")
    instance = InstanceSerializer()
    algorithms = AlgorithmSerializer(many=True, allow_empty=False)
    seeds = serializers.ListField(
        child=serializers.IntegerField(min_value=0), allow_empty=False, default=lambda: [0]
    )
    output_dir = serializers.CharField(default=lambda: str(nashlab_setting("RUNS_ROOT")))
    reference_tol = serializers.FloatField(
        default=lambda: nashlab_setting("REFERENCE_TOLERANCE"), validators=[_positive]
    )
    reference_max_iters = serializers.IntegerField(
        min_value=1, default=lambda: nashlab_setting("REFERENCE_MAX_ITERS")
    )
    target_accuracy = serializers.FloatField(default=1e-2, validators=[_positive])
    workers = serializers.IntegerField(min_value=1, default=1)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    instance: dict
    algorithms: tuple
    seeds: tuple
    output_dir: str
    reference_tol: float
    reference_max_iters: int
    target_accuracy: float
    workers: int

    def as_dict(self):
        return {
            "name": self.name,
            "instance": dict(self.instance),
            "algorithms": [copy.deepcopy(algorithm) for algorithm in self.algorithms],
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "reference_tol": self.reference_tol,
            "reference_max_iters": self.reference_max_iters,
            "target_accuracy": self.target_accuracy,
            "workers": self.workers,
        }


def flatten_errors(detail, prefix=""):
    """DRF error detail -> [(dotted.path, message)]"""
    if isinstance(detail, dict):
        found = []
        for key, value in detail.items():
            path = prefix if key == "non_field_errors" else f"{prefix}.{key}".lstrip(".")
            found.extend(flatten_errors(value, path))
        return found
    if isinstance(detail, list):
        if all(isinstance(item, str) for item in detail):
            return [(prefix, str(item)) for item in detail]
        found = []
        for index, item in enumerate(detail):
            found.extend(flatten_errors(item, f"{prefix}.{index}".lstrip(".")))
        return found
    return [(prefix, str(detail))]


def _plain(value):
    if isinstance(value, (dict, OrderedDict)):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def apply_overrides(document, seed=None, algo=None, out=None, max_iters=None, tol=None):
    """Command-line flags win over the document; applied before validation"""
    document = copy.deepcopy(document)
    if seed is not None:
        document["seeds"] = [seed]
    if out is not None:
        document["output_dir"] = str(out)
    if algo is not None:
        chosen = [entry for entry in document.get("algorithms") or []
                  if isinstance(entry, dict) and entry.get("name") == algo]
        document["algorithms"] = chosen or [{"name": algo}]
    for key, value in (("max_iters", max_iters), ("tol", tol)):
        if value is not None:
            for entry in document.get("algorithms") or []:
                if isinstance(entry, dict):
                    entry[key] = value
    return document


def parse_config(document, **overrides):
    """Validate a config document and fill defaults

    Raises:
        ConfigurationError -- Names the dotted key path of the first problem
    """
    if not isinstance(document, dict):
        raise ConfigurationError("config document must be an object")
    document = apply_overrides(document, **overrides)
    serializer = ExperimentSerializer(data=document)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        for path, message in errors[1:]:
            logger.error("config error at %s: %s", path or "<root>", message)
        path, message = errors[0]
        raise ConfigurationError(message, path or None)

    data = _plain(serializer.validated_data)
    return ExperimentConfig(
        name=data["name"],
        instance=data["instance"],
        algorithms=tuple(data["algorithms"]),
        seeds=tuple(data["seeds"]),
        output_dir=data["output_dir"],
        reference_tol=data["reference_tol"],
        reference_max_iters=data["reference_max_iters"],
        target_accuracy=data["target_accuracy"],
        workers=data["workers"],
    )


def load_config(path, **overrides):
    """Read a JSON config file and validate it

    Raises:
        ConfigurationError -- Unreadable file, JSON syntax error (with line and
            column) or an invalid entry (with its key path)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as ex:
        raise ConfigurationError(f"cannot read config {path}: {ex.strerror}") from ex
    try:
        document = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ConfigurationError(
            f"{path}: line {ex.lineno} column {ex.colno}: {ex.msg}"
        ) from ex
    config = parse_config(document, **overrides)
    logger.info("loaded config %s (%d algorithms, %d seeds)", path, len(config.algorithms),
                len(config.seeds))
    return config


def dump_config(config, path=None):
    """Effective config as JSON text; written to `path` when given"""
    text = json.dumps(config.as_dict(), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
