"""One (algorithm, seed) cell of an experiment"""

from django.db import models
from .experiment import Experiment


class Run(models.Model):
    experiment = models.ForeignKey(
        Experiment, on_delete=models.CASCADE, related_name="runs"
    )
    algorithm = models.CharField(max_length=40)
    seed = models.BigIntegerField()
    status = models.CharField(max_length=20)
    iterations = models.PositiveIntegerField(default=0)
    final_rel_dist = models.FloatField(null=True, blank=True)
    final_dual_disagreement = models.FloatField(null=True, blank=True)
    oracle_calls = models.BigIntegerField(default=0)
    samples = models.BigIntegerField(default=0)
    elapsed_ns = models.BigIntegerField(default=0)
    calls_to_target = models.BigIntegerField(null=True, blank=True)
    csv_path = models.CharField(max_length=255, blank=True)
    error = models.TextField(blank=True)

    class Meta:
        ordering = ("experiment", "algorithm", "seed")
