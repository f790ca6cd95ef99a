from django.db import models
from safedelete.models import SafeDeleteModel
from safedelete.models import SOFT_DELETE
from .instance import Instance


class Experiment(SafeDeleteModel):

    _safedelete_policy = SOFT_DELETE
    name = models.CharField(max_length=100)
    config = models.JSONField()
    instance = models.ForeignKey(
        Instance, on_delete=models.DO_NOTHING, related_name="experiments"
    )
    output_dir = models.CharField(max_length=255)
    status = models.CharField(max_length=20, default="running")
    created_date = models.DateTimeField(auto_now_add=True)
    completed_date = models.DateTimeField(null=True, blank=True)

    @property
    def failed_runs(self):
        """failed_runs property of an experiment

        Returns:
            int -- Number of runs that diverged or failed
        """
        return self.runs.filter(status__in=("failed", "diverged")).count()

    def __str__(self):
        return self.name
