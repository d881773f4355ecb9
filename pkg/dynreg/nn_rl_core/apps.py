from django.apps import AppConfig


class NnRlCoreConfig(AppConfig):
    name = "nn_rl_core"
    verbose_name = "Neural network and reinforcement learning kit"
