from django.apps import AppConfig


class KolmogorovConfig(AppConfig):
    name = "kolmogorov"
    verbose_name = "Stationary Kolmogorov toolkit"
