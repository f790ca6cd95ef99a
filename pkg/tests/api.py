import json
import os
import tempfile
from rest_framework import status
from rest_framework.test import APITestCase

from nashlabapi.harness.config import parse_config
from nashlabapi.harness.experiment import run_experiment
from nashlabapi.models import Run
from nashlabapi.numerics.solvers import METRICS


class ApiTests(APITestCase):
    def setUp(self) -> None:
        """
        Run and store a small two algorithm, two seed experiment
        """
        scratch = tempfile.TemporaryDirectory()
        self.addCleanup(scratch.cleanup)
        config = parse_config({
            "name": "api",
            "instance": {"seed": 0, "num_companies": 5, "num_markets": 3},
            "algorithms": [{"name": "det_fb", "max_iters": 10}, {"name": "fbf", "max_iters": 10}],
            "seeds": [0, 1],
            "output_dir": scratch.name,
            "reference_tol": 1e-9,
        })
        self.experiment = run_experiment(config, persist=True).experiment
        self.instance = self.experiment.instance

    def test_list_instances(self):
        """
        Ensure instances are listed without their documents.
        """
        response = self.client.get("/instances")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(json_response), 1)
        self.assertEqual(json_response[0]["num_agents"], 5)
        self.assertEqual(json_response[0]["num_markets"], 3)
        self.assertNotIn("document", json_response[0])

    def test_get_instance(self):
        """
        Ensure a single instance carries its full document.
        """
        response = self.client.get(f"/instances/{self.instance.id}")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(json_response["instance_hash"], self.instance.instance_hash)
        self.assertEqual(json_response["document"]["schema"], "nashlab.cournot/v1")

        response = self.client.get("/instances/999")
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_get_experiment(self):
        """
        Ensure an experiment links its instance and counts failed runs.
        """
        response = self.client.get(f"/experiments/{self.experiment.id}")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(json_response["name"], "api")
        self.assertEqual(json_response["status"], "completed")
        self.assertEqual(json_response["failed_runs"], 0)
        self.assertTrue(json_response["instance"].endswith(f"/instances/{self.instance.id}"))
        self.assertEqual(len(json_response["config"]["algorithms"]), 2)

        response = self.client.get("/experiments")
        self.assertEqual(len(json.loads(response.content)), 1)
        response = self.client.get("/experiments/999")
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_experiment_summary(self):
        """
        Ensure the summary holds one row per algorithm and seed.
        """
        response = self.client.get(f"/experiments/{self.experiment.id}/summary")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([(row["algorithm"], row["seed"]) for row in json_response],
                         [("det_fb", 0), ("det_fb", 1), ("fbf", 0), ("fbf", 1)])
        for row in json_response:
            self.assertEqual(row["iterations"], 10)
            self.assertGreater(row["final_rel_dist"], 0.0)

    def test_filter_runs(self):
        """
        Ensure runs filter by experiment and algorithm.
        """
        response = self.client.get(f"/runs?experiment={self.experiment.id}&algorithm=fbf")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(json_response), 2)
        self.assertEqual({row["algorithm"] for row in json_response}, {"fbf"})
        self.assertEqual(json_response[0]["oracle_calls"], 20)

        response = self.client.get("/runs?experiment=999")
        self.assertEqual(json.loads(response.content), [])

    def test_plot_data(self):
        """
        Ensure a run returns one plot row per iteration for a valid metric.
        """
        run = Run.objects.get(experiment=self.experiment, algorithm="det_fb", seed=1)
        response = self.client.get(f"/runs/{run.id}/plotdata?metric=dual_disagreement")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(json_response), 10)
        self.assertEqual(json_response[0]["k"], 1)
        self.assertEqual(json_response[-1]["k"], 10)
        self.assertEqual({row["seed"] for row in json_response}, {1})

    def test_plot_data_errors(self):
        """
        Ensure unknown metrics list the valid ones and missing runs or files give 404.
        """
        run = Run.objects.get(experiment=self.experiment, algorithm="fbf", seed=0)
        response = self.client.get(f"/runs/{run.id}/plotdata?metric=speed")
        json_response = json.loads(response.content)

        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertEqual(json_response["valid"], list(METRICS))

        response = self.client.get("/runs/999/plotdata")
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

        os.remove(run.csv_path)
        response = self.client.get(f"/runs/{run.id}/plotdata")
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)
