#!/usr/bin/env python
"""kolmocouple のコマンドライン入口 (certify / simulate / solve / residual / mollify / paper_suite / compare)."""
import os
import sys


def main():
    """管理コマンドを実行する。"""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the project dependencies "
            "(see pyproject.toml) before running kolmocouple commands."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
