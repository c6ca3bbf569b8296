from django.conf import settings
from django.test import override_settings


def numeric_settings(**changes):
    """KOLMOCOUPLE の一部だけを差し替える override_settings"""
    return override_settings(KOLMOCOUPLE={**settings.KOLMOCOUPLE, **changes})
