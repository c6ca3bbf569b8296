"""
report.json の組み立て・書き出し・比較。

レポートはキーをソートした JSON で、NaN/∞ は null に置き換える。
実行時間・スレッド数・出力先など実行環境に依存する値は載せないので、
同じシナリオと同じシードなら何度実行してもバイト単位で同じファイルになる。
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ConfigError, SchemaVersionError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def clean(value):
    """numpy 型・タプル・非有限値を JSON に載せられる形に直す"""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def build_report(scenario, verdict, results, files=(), provenance=None, tolerances=None):
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.to_dict(),
        "task": scenario.task,
        "verdict": verdict,
        "expect": scenario.expect,
        "results": results,
        "files": sorted(files),
        "provenance": provenance or {},
    }
    if tolerances:
        report["tolerances"] = dict(tolerances)
    return clean(report)


def dumps(report) -> str:
    return json.dumps(clean(report), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def write_report(report, path) -> str:
    """書き出して SHA-256 を返す"""
    text = dumps(report).encode("utf-8")
    Path(path).write_bytes(text)
    return hashlib.sha256(text).hexdigest()


def read_report(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError("report", f"file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ==========================================
# 🔍 比較
# ==========================================


@dataclass(frozen=True)
class DiffEntry:
    path: str
    left: object
    right: object
    kind: str
    tolerance: float = 0.0

    def to_dict(self):
        return {"path": self.path, "left": self.left, "right": self.right, "kind": self.kind,
                "tolerance": self.tolerance}


@dataclass
class ReportDiff:
    entries: list = field(default_factory=list)
    compared: int = 0

    @property
    def empty(self):
        return not self.entries

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [e.to_dict() for e in self.entries], columns=["path", "left", "right", "kind", "tolerance"]
        )

    def to_dict(self):
        return {"empty": self.empty, "compared": self.compared, "entries": [e.to_dict() for e in self.entries]}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _tolerance_for(path, tolerances):
    """最も長く一致する接頭辞の許容誤差"""
    best, best_len = None, -1
    for prefix, tol in tolerances.items():
        if (path == prefix or path.startswith(prefix + ".")) and len(prefix) > best_len:
            best, best_len = float(tol), len(prefix)
    return best


def _merged_tolerances(a, b, extra):
    merged = {}
    for source in (a.get("tolerances") or {}, b.get("tolerances") or {}, extra or {}):
        for key, value in source.items():
            merged[key] = max(float(value), merged.get(key, 0.0))
    return merged


def compare_reports(a, b, rtol=1e-12, atol=0.0, tolerances=None, only=None) -> ReportDiff:
    """
    2 つのレポートをフィールドごとに比較する。
    数値は |a-b| <= atol + rtol·|b| (パス別の許容誤差があればそれも足す)、それ以外は完全一致。
    レポートに載っている "tolerances" (例: Euler 法の O(h) 偏り) は自動的に使う。
    """
    if isinstance(a, (str, Path)):
        a = read_report(a)
    if isinstance(b, (str, Path)):
        b = read_report(b)
    va, vb = a.get("schema_version"), b.get("schema_version")
    if va != SCHEMA_VERSION or vb != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema versions differ or are unsupported: {va} vs {vb} (expected {SCHEMA_VERSION})")
    tol_map = _merged_tolerances(a, b, tolerances)
    prefixes = tuple(only or ())
    diff = ReportDiff()

    def selected(path):
        return not prefixes or any(path == p or path.startswith(p + ".") or p.startswith(path + ".") for p in prefixes)

    def walk(x, y, path):
        if path and not selected(path):
            return
        if isinstance(x, dict) and isinstance(y, dict):
            for key in sorted(set(x) | set(y)):
                sub = f"{path}.{key}" if path else key
                if key not in x or key not in y:
                    if selected(sub):
                        diff.entries.append(DiffEntry(sub, x.get(key), y.get(key), "missing"))
                    continue
                walk(x[key], y[key], sub)
            return
        if isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                diff.entries.append(DiffEntry(path, len(x), len(y), "length"))
                return
            for i, (u, v) in enumerate(zip(x, y)):
                walk(u, v, f"{path}.{i}")
            return
        diff.compared += 1
        if _is_number(x) and _is_number(y):
            extra = _tolerance_for(path, tol_map) or 0.0
            allowed = atol + extra + rtol * abs(float(y))
            if abs(float(x) - float(y)) > allowed:
                diff.entries.append(DiffEntry(path, x, y, "numeric", allowed))
            return
        if x != y:
            diff.entries.append(DiffEntry(path, x, y, "value"))

    walk(a, b, "")
    logger.info("compared %d leaves: %d differences", diff.compared, len(diff.entries))
    return diff
