"""View module for handling requests about individual runs"""

import math
from django.http import HttpResponseServerError
from rest_framework.viewsets import ViewSet
from rest_framework.response import Response
from rest_framework import serializers
from rest_framework import status
from rest_framework.decorators import action
from nashlabapi.models import Run
from nashlabapi.harness.export import plot_rows
from nashlabapi.harness.records import read_record
from nashlabapi.numerics.exceptions import ConfigurationError
from nashlabapi.numerics.solvers import METRICS


class RunSerializer(serializers.ModelSerializer):
    """JSON serializer for runs"""

    class Meta:
        model = Run
        fields = (
            "id",
            "experiment",
            "algorithm",
            "seed",
            "status",
            "iterations",
            "final_rel_dist",
            "final_dual_disagreement",
            "oracle_calls",
            "samples",
            "elapsed_ns",
            "calls_to_target",
            "error",
        )


class Runs(ViewSet):
    """Read-only access to runs and their per-iteration data"""

    def retrieve(self, request, pk=None):
        """
        @api {GET} /runs/:id GET single run
        @apiName GetRun
        @apiGroup Runs

        @apiParam {id} id Run Id route parameter
        """
        try:
            run = Run.objects.get(pk=pk)
            serializer = RunSerializer(run, context={"request": request})
            return Response(serializer.data)

        except Run.DoesNotExist as ex:
            return Response({"message": ex.args[0]}, status=status.HTTP_404_NOT_FOUND)

        except Exception as ex:
            return HttpResponseServerError(ex)

    def list(self, request):
        """
        @api {GET} /runs GET runs
        @apiName ListRuns
        @apiGroup Runs

        @apiParam {id} experiment (Optional) Filter runs by experiment id
        @apiParam {String} algorithm (Optional) Filter runs by algorithm name
        """
        runs = Run.objects.all()

        experiment = self.request.query_params.get("experiment", None)
        if experiment is not None:
            runs = runs.filter(experiment__id=experiment)

        algorithm = self.request.query_params.get("algorithm", None)
        if algorithm is not None:
            runs = runs.filter(algorithm=algorithm)

        serializer = RunSerializer(runs, many=True, context={"request": request})
        return Response(serializer.data)

    @action(methods=["get"], detail=True)
    def plotdata(self, request, pk=None):
        """
        @api {GET} /runs/:id/plotdata?metric=rel_dist GET long-format plot rows
        @apiName GetRunPlotData
        @apiGroup Runs

        @apiParam {String} metric One of the run metrics, rel_dist by default

        @apiSuccessExample {json} Success
            [
                {"algorithm": "fbf", "seed": 0, "k": 1, "value": 0.93},
                {"algorithm": "fbf", "seed": 0, "k": 2, "value": 0.88}
            ]

        @apiErrorExample {json} Unknown metric
            HTTP/1.1 400 Bad Request
            {
                "message": "unknown metric 'speed'; valid metrics: rel_dist, ...",
                "valid": ["rel_dist", "dual_disagreement", "..."]
            }
        """
        metric = request.query_params.get("metric", "rel_dist")
        try:
            run = Run.objects.get(pk=pk)
            rows = plot_rows(read_record(run.csv_path), metric)
            return Response([
                {"algorithm": algorithm, "seed": seed, "k": k,
                 "value": None if math.isnan(value) else value}
                for algorithm, seed, k, value in rows
            ])

        except Run.DoesNotExist as ex:
            return Response({"message": ex.args[0]}, status=status.HTTP_404_NOT_FOUND)

        except ConfigurationError as ex:
            if metric not in METRICS:
                return Response({"message": str(ex), "valid": list(METRICS)},
                                status=status.HTTP_400_BAD_REQUEST)
            return Response({"message": str(ex)}, status=status.HTTP_404_NOT_FOUND)
