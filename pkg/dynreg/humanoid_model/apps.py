from django.apps import AppConfig


class HumanoidModelConfig(AppConfig):
    name = "humanoid_model"
    verbose_name = "Humanoid and scene descriptions"
