from django.apps import AppConfig


class PhysicsSimConfig(AppConfig):
    name = "physics_sim"
    verbose_name = "Articulated rigid-body simulation"
