from django.contrib import admin
from django.urls import include, path
from rest_framework import routers
from nashlabapi.views import Experiments, Instances, Runs

# pylint: disable=invalid-name
router = routers.DefaultRouter(trailing_slash=False)
router.register(r"instances", Instances, "instance")
router.register(r"experiments", Experiments, "experiment")
router.register(r"runs", Runs, "run")

urlpatterns = [
    path("", include(router.urls)),
    path("admin/", admin.site.urls),
]
