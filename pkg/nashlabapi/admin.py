from django.contrib import admin
from nashlabapi.models import Experiment, Instance, ReferenceSolution, Run


@admin.register(Instance)
class InstanceAdmin(admin.ModelAdmin):
    list_display = ("name", "instance_hash", "num_agents", "num_markets", "seed", "created_date")


@admin.register(ReferenceSolution)
class ReferenceSolutionAdmin(admin.ModelAdmin):
    list_display = ("instance_hash", "tolerance", "iterations", "created_date")
    exclude = ("primal", "dual")


@admin.register(Experiment)
class ExperimentAdmin(admin.ModelAdmin):
    list_display = ("name", "status", "output_dir", "created_date", "completed_date")


@admin.register(Run)
class RunAdmin(admin.ModelAdmin):
    list_display = ("experiment", "algorithm", "seed", "status", "iterations", "final_rel_dist")
    list_filter = ("algorithm", "status")
