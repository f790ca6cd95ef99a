"""View module for handling requests about stored market instances"""

from django.http import HttpResponseServerError
from rest_framework.viewsets import ViewSet
from rest_framework.response import Response
from rest_framework import serializers
from rest_framework import status
from nashlabapi.models import Instance


class InstanceSerializer(serializers.HyperlinkedModelSerializer):
    """JSON serializer for market instances"""

    class Meta:
        model = Instance
        fields = (
            "id",
            "url",
            "instance_hash",
            "name",
            "num_agents",
            "num_markets",
            "seed",
            "created_date",
        )


class InstanceDocumentSerializer(InstanceSerializer):
    """Instance with its full document"""

    class Meta(InstanceSerializer.Meta):
        fields = InstanceSerializer.Meta.fields + ("document",)


class Instances(ViewSet):
    """Read-only access to generated instances"""

    def retrieve(self, request, pk=None):
        """
        @api {GET} /instances/:id GET single instance
        @apiName GetInstance
        @apiGroup Instances

        @apiParam {id} id Instance Id route parameter

        @apiSuccess (200) {id} id Instance id
        @apiSuccess (200) {String} instance_hash sha256 of the canonical document
        @apiSuccess (200) {Object} document Full instance document

        @apiSuccessExample {json} Success
            {
                "id": 1,
                "url": "http://localhost:8000/instances/1",
                "instance_hash": "5f0c...",
                "name": "cournot-20x7",
                "num_agents": 20,
                "num_markets": 7,
                "seed": 42,
                "created_date": "2026-10-19T12:00:00Z",
                "document": {"schema": "nashlab.cournot/v1", "...": "..."}
            }
        """
        try:
            instance = Instance.objects.get(pk=pk)
            serializer = InstanceDocumentSerializer(instance, context={"request": request})
            return Response(serializer.data)

        except Instance.DoesNotExist as ex:
            return Response({"message": ex.args[0]}, status=status.HTTP_404_NOT_FOUND)

        except Exception as ex:
            return HttpResponseServerError(ex)

    def list(self, request):
        """
        @api {GET} /instances GET all instances
        @apiName ListInstances
        @apiGroup Instances

        @apiSuccess (200) {Object[]} instances Array of instances, without documents
        """
        instances = Instance.objects.all().order_by("id")
        serializer = InstanceSerializer(instances, many=True, context={"request": request})
        return Response(serializer.data)
