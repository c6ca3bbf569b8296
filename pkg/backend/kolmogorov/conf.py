"""settings.KOLMOCOUPLE から数値設定を読むヘルパー。値は config/settings.py にだけ置く。"""

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


def get_setting(name):
    try:
        return settings.KOLMOCOUPLE[name]
    except (AttributeError, KeyError):
        raise ImproperlyConfigured(f"KOLMOCOUPLE[{name!r}] is missing from the project settings")


def resolve_threads(threads=None):
    """--threads 指定 > KOLMOCOUPLE_THREADS (settings 経由) > 1"""
    if threads is None:
        threads = get_setting("threads")
    return max(1, int(threads))


def provenance(*names):
    """report.json に載せる許容誤差の出所"""
    return {name: get_setting(name) for name in names}
