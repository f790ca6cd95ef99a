from django.apps import AppConfig


class NashlabapiConfig(AppConfig):
    name = 'nashlabapi'
    default_auto_field = 'django.db.models.AutoField'
