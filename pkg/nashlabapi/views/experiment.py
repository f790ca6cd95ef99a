"""View module for handling requests about experiments and their summaries"""

from django.http import HttpResponseServerError
from rest_framework.viewsets import ViewSet
from rest_framework.response import Response
from rest_framework import serializers
from rest_framework import status
from rest_framework.decorators import action
from nashlabapi.models import Experiment
from .run import RunSerializer


class ExperimentSerializer(serializers.HyperlinkedModelSerializer):
    """JSON serializer for experiments"""

    class Meta:
        model = Experiment
        fields = (
            "id",
            "url",
            "name",
            "instance",
            "output_dir",
            "status",
            "failed_runs",
            "config",
            "created_date",
            "completed_date",
        )


class Experiments(ViewSet):
    """Read-only access to experiments"""

    def retrieve(self, request, pk=None):
        """
        @api {GET} /experiments/:id GET single experiment
        @apiName GetExperiment
        @apiGroup Experiments

        @apiParam {id} id Experiment Id route parameter

        @apiSuccessExample {json} Success
            {
                "id": 3,
                "url": "http://localhost:8000/experiments/3",
                "name": "fig3",
                "instance": "http://localhost:8000/instances/1",
                "output_dir": "runs/fig3",
                "status": "completed",
                "failed_runs": 0,
                "config": {"algorithms": ["..."]},
                "created_date": "2026-10-19T12:00:00Z",
                "completed_date": "2026-10-19T12:04:10Z"
            }
        """
        try:
            experiment = Experiment.objects.get(pk=pk)
            serializer = ExperimentSerializer(experiment, context={"request": request})
            return Response(serializer.data)

        except Experiment.DoesNotExist as ex:
            return Response({"message": ex.args[0]}, status=status.HTTP_404_NOT_FOUND)

        except Exception as ex:
            return HttpResponseServerError(ex)

    def list(self, request):
        """
        @api {GET} /experiments GET all experiments
        @apiName ListExperiments
        @apiGroup Experiments

        @apiSuccess (200) {Object[]} experiments Array of experiments
        """
        experiments = Experiment.objects.all().order_by("-created_date")
        serializer = ExperimentSerializer(experiments, many=True, context={"request": request})
        return Response(serializer.data)

    @action(methods=["get"], detail=True)
    def summary(self, request, pk=None):
        """
        @api {GET} /experiments/:id/summary GET per-run summary rows
        @apiName GetExperimentSummary
        @apiGroup Experiments

        @apiSuccess (200) {Object[]} runs One row per (algorithm, seed) cell
        @apiSuccessExample {json} Success
            [
                {
                    "id": 7,
                    "algorithm": "stoch_fb_saa",
                    "seed": 0,
                    "status": "completed",
                    "iterations": 3000,
                    "final_rel_dist": 0.0041,
                    "final_dual_disagreement": 0.00012,
                    "oracle_calls": 3000,
                    "samples": 1080540000,
                    "elapsed_ns": 41234000000,
                    "calls_to_target": 512
                }
            ]
        """
        try:
            experiment = Experiment.objects.get(pk=pk)
        except Experiment.DoesNotExist as ex:
            return Response({"message": ex.args[0]}, status=status.HTTP_404_NOT_FOUND)

        serializer = RunSerializer(experiment.runs.all(), many=True, context={"request": request})
        return Response(serializer.data)
