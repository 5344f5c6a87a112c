from django.apps import AppConfig


class SdfConfig(AppConfig):
    name = 'apps.sdf'
