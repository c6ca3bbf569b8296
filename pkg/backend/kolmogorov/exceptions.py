"""
kolmogorov アプリの例外階層。
管理コマンドは KolmogorovError を CommandError(returncode=1) に変換する。
"""

import numpy as np


class KolmogorovError(Exception):
    """全ての数値ツールキット例外の基底"""

    def to_dict(self):
        return {"type": type(self).__name__, "message": str(self)}


class InvalidParameterError(KolmogorovError):
    def __init__(self, parameter, message):
        self.parameter = parameter
        super().__init__(f"{parameter}: {message}")

    def to_dict(self):
        return {**super().to_dict(), "parameter": self.parameter}


class NumericalEvaluationError(KolmogorovError):
    """係数評価が非有限値を返した"""

    def __init__(self, point, what="coefficient"):
        self.point = np.asarray(point, dtype=float).tolist()
        super().__init__(f"non-finite {what} evaluation at x={self.point}")

    def to_dict(self):
        return {**super().to_dict(), "point": self.point}


class DiagonalUndefinedError(KolmogorovError):
    """r(x, y) は x != y でのみ定義される"""


class ContractViolationError(KolmogorovError):
    """入力が前提条件 (対称性・非負性など) を満たさない"""


class ToleranceError(KolmogorovError):
    def __init__(self, message, estimate=None, error=None):
        self.estimate = estimate
        self.error = error
        super().__init__(f"{message} (estimate={estimate}, error={error})")

    def to_dict(self):
        return {**super().to_dict(), "estimate": self.estimate, "error": self.error}


class UnsupportedDimensionError(KolmogorovError):
    pass


class DegenerateFitError(KolmogorovError):
    pass


class PathBlowupError(KolmogorovError):
    def __init__(self, escape_time, chain=0):
        self.escape_time = escape_time
        self.chain = chain
        super().__init__(f"trajectory {chain} escaped at t={escape_time}")


class UnsupportedDegeneracyError(KolmogorovError):
    pass


class AnisotropyError(KolmogorovError):
    def __init__(self, cells, fraction):
        self.cells = [list(map(int, c)) for c in cells]
        self.fraction = fraction
        shown = self.cells[:10]
        super().__init__(
            f"cross-diffusion exceeds min(a11, a22) on {fraction:.2%} of cells, e.g. {shown}"
        )

    def to_dict(self):
        return {**super().to_dict(), "cells": self.cells[:100], "fraction": self.fraction}


class ConvergenceError(KolmogorovError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class ResolutionError(KolmogorovError):
    pass


class DomainTruncationError(KolmogorovError):
    pass


class ConfigError(KolmogorovError):
    """設定ファイルの検証エラー (ドット区切りのキーを持つ)"""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")

    def to_dict(self):
        return {**super().to_dict(), "path": self.path}


class SchemaVersionError(KolmogorovError):
    pass
