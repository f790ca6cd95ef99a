"""Stored market instances, one row per distinct instance document"""

from django.db import models


class Instance(models.Model):
    instance_hash = models.CharField(max_length=64, unique=True)
    name = models.CharField(max_length=100)
    num_agents = models.PositiveIntegerField()
    num_markets = models.PositiveIntegerField()
    seed = models.BigIntegerField(null=True, blank=True)
    document = models.JSONField()
    created_date = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"{self.name} ({self.instance_hash[:12]})"
