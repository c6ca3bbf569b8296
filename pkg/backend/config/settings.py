import os

"""
Django settings for the kolmocouple project.

数値計算本体は kolmogorov アプリにあり、Django は
管理コマンド (CLI)・実行ログ (ORM)・テストランナーとして使う。
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY", "django-insecure-kolmocouple-local-batch-runs-only"
)

DEBUG = os.environ.get("DJANGO_DEBUG", "1") == "1"

ALLOWED_HOSTS = os.environ.get("DJANGO_ALLOWED_HOSTS", "").split(",")

# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    # --- 自作アプリ ---
    "kolmogorov",
]

MIDDLEWARE = []


# Database
# 実行ログ (ScenarioRun) 専用。既定は SQLite。

DATABASES = {
    "default": {
        "ENGINE": os.environ.get("DB_ENGINE", "django.db.backends.sqlite3"),
        "NAME": os.environ.get("DB_NAME", str(BASE_DIR / "db.sqlite3")),
        "USER": os.environ.get("DB_USER", ""),
        "PASSWORD": os.environ.get("DB_PASSWORD", ""),
        "HOST": os.environ.get("DB_HOST", ""),
        "PORT": os.environ.get("DB_PORT", ""),
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

LANGUAGE_CODE = "ja"  # 日本語

TIME_ZONE = "Asia/Tokyo"  # JST

USE_I18N = True

USE_TZ = True


# ==========================================
# 📝 Logging
# ==========================================
# ライブラリ側は logging.getLogger(__name__) で出力し、ここでまとめて受ける。

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "[{levelname}] {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "kolmogorov": {
            "handlers": ["console"],
            "level": os.environ.get("KOLMOCOUPLE_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# ==========================================
# 🧮 kolmocouple 数値設定
# ==========================================
# 各モジュールは kolmogorov.conf.get_setting() 経由でここを読む。
# テストでは override_settings で差し替える。

KOLMOCOUPLE = {
    # 並列数 (--threads 未指定時のフォールバック)
    "threads": int(os.environ.get("KOLMOCOUPLE_THREADS", "1")),
    # coeff: 正定値判定の相対許容誤差
    "psd_tolerance": 1e-10,
    # doubling: 対角判定 |x-y| <= tol * (1 + |x| + |y|)
    "diagonal_tolerance": 1e-14,
    "max_doubled_dimension": 16,
    # measures: 解析密度の適応求積
    "quadrature_rtol": 1e-8,
    "quadrature_atol": 1e-10,
    "quadrature_base_nodes": 16,
    "quadrature_max_level": 3,
    "quadrature_chunk": 65536,
    # certify: 走査領域の既定値
    "scan_radius": 10.0,
    "scan_separation_floor": 1e-6,
    "scan_sample_budget": 200_000,
    "scan_multistart_count": 32,
    "scan_margin_floor": 1e-8,
    "scan_fd_step": 1e-5,
    "scan_chunk_size": 8192,
    "moment_radius": 8.0,
    # coupling: 同期結合シミュレーション
    "coupling_block_size": 512,
    "coupling_snapshots": 100,
    "coupling_blowup_guard": 1e12,
    "coupling_noise_chunk": 256,
    # fpk: 定常解ソルバー
    "degeneracy_threshold": 1e-10,
    "power_iteration_max": 100_000,
    "power_iteration_tol": 1e-12,
    "anisotropy_fraction": 0.99,
    # mollify: 正則化
    "mollifier_resolution_ratio": 0.25,
    "gaussian_tail_mass": 1e-10,
    "density_underflow": 1e-300,
    # runner: --out も output_dir も無いときの出力先 (runs/<name>)
    "output_root": os.environ.get("KOLMOCOUPLE_OUTPUT_ROOT", str(BASE_DIR / "runs")),
}
