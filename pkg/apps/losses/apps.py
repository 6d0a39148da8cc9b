from django.apps import AppConfig


class LossesConfig(AppConfig):
    name = "apps.losses"
    verbose_name = "Losses"
