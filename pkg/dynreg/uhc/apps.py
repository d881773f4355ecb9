from django.apps import AppConfig


class UhcConfig(AppConfig):
    name = "uhc"
    verbose_name = "Universal humanoid controller"
