from django.apps import AppConfig


class MetricsEvalConfig(AppConfig):
    name = "metrics_eval"
    verbose_name = "Evaluation metrics"
