from django.apps import AppConfig


class KinPolicyConfig(AppConfig):
    name = "kin_policy"
    verbose_name = "Object-aware kinematic policy"
