"""
シナリオ設定 (TOML) の読み込みと検証。

    name = "ou-certify"
    task = "certify"
    seed = 7
    expect = "holds"

    [field]
    family = "ornstein_uhlenbeck"
    d = 1
    lambda = 1.0

    [certify]
    criteria = ["theorem1"]
    radius = 5.0

検証エラーは ConfigError (ドット区切りのキー付き) で報告する。
既定値はここで埋めるので、Scenario.to_dict() はそのまま再実行できる完全な記述になる。
文法の詳細は docs/scenario_format.md を参照。
"""

import copy
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .certify import LambdaFunction, ScanRegion
from .coeff import FAMILIES, CoefficientField, FieldParams, make_builtin
from .coupling import sampler_from_config
from .exceptions import ConfigError, InvalidParameterError
from .fpk import battery_from_config
from .measures import Box, measure_from_config

logger = logging.getLogger(__name__)

TASKS = ("certify", "simulate", "solve", "residual", "mollify", "paper-suite")
EXPECTATIONS = ("holds", "violated")
CERTIFY_CRITERIA = ("theorem1", "theorem2", "corollary1", "example3", "example4", "moments")
MOMENT_CRITERIA = ("theorem1", "theorem2", "corollary1", "superposition")
SUITE_CRITERIA = tuple(range(1, 11))

_MISSING = object()


# ==========================================
# 🧰 値の検証ヘルパー
# ==========================================


def _join(prefix, key):
    return f"{prefix}.{key}" if prefix else key


def _reject_unknown(table, allowed, prefix):
    for key in table:
        if key not in allowed:
            raise ConfigError(_join(prefix, key), "unknown key")


def _table(data, key, prefix, default=_MISSING):
    path = _join(prefix, key)
    value = data.get(key)
    if value is None:
        if default is _MISSING:
            raise ConfigError(path, "required section is missing")
        return default
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a table")
    return value


def _number(data, key, prefix, default=_MISSING, *, minimum=None, strict=False, integer=False):
    path = _join(prefix, key)
    value = data.get(key)
    if value is None:
        if default is _MISSING:
            raise ConfigError(path, "required key is missing")
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if minimum is not None:
        if strict and not value > minimum:
            raise ConfigError(path, f"must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _boolean(data, key, prefix, default):
    value = data.get(key)
    if value is None:
        return default
    if not isinstance(value, bool):
        raise ConfigError(_join(prefix, key), f"must be true or false, got {value!r}")
    return value


def _choice(data, key, prefix, choices, default=_MISSING):
    path = _join(prefix, key)
    value = data.get(key)
    if value is None:
        if default is _MISSING:
            raise ConfigError(path, "required key is missing")
        return default
    if value not in choices:
        raise ConfigError(path, f"must be one of {list(choices)}, got {value!r}")
    return value


def _vector(data, key, prefix, length=None, default=_MISSING):
    path = _join(prefix, key)
    value = data.get(key)
    if value is None:
        if default is _MISSING:
            raise ConfigError(path, "required key is missing")
        return default
    if not isinstance(value, (list, tuple)) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(path, "must be a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"must have {length} entries, got {len(value)}")
    return [float(v) for v in value]


def _resolve_paths(spec, base_dir):
    """測度・係数表の相対パスを設定ファイルの場所から解決する"""
    if isinstance(spec, dict):
        out = {}
        for key, value in spec.items():
            if key == "path" and isinstance(value, str) and base_dir is not None:
                path = Path(value)
                out[key] = str(path if path.is_absolute() else (base_dir / path).resolve())
            else:
                out[key] = _resolve_paths(value, base_dir)
        return out
    if isinstance(spec, list):
        return [_resolve_paths(v, base_dir) for v in spec]
    return spec


def _invalid(prefix, error: InvalidParameterError):
    return ConfigError(_join(prefix, error.parameter), str(error))


# ==========================================
# 🧱 field / measure / battery
# ==========================================


def build_field(params: FieldParams) -> CoefficientField:
    try:
        return make_builtin(params)
    except InvalidParameterError as e:
        raise _invalid("field", e) from e


def _parse_field(table, base_dir) -> FieldParams:
    if "family" not in table:
        raise ConfigError("field.family", "required key is missing")
    family = table["family"]
    if family not in FAMILIES:
        raise ConfigError("field.family", f"unknown family {family!r}; expected one of {list(FAMILIES)}")
    d = _number(table, "d", "field", 1, minimum=1, integer=True)
    d1 = _number(table, "d1", "field", None, minimum=1, integer=True)
    parameters = _resolve_paths({k: v for k, v in table.items() if k not in ("family", "d", "d1")}, base_dir)
    params = FieldParams(family, d, d1, parameters)
    build_field(params)
    return params


def _measure(data, key, prefix, dim, base_dir, default=_MISSING):
    spec = _table(data, key, prefix, default)
    if spec is default:
        return spec
    path = _join(prefix, key)
    spec = _resolve_paths(spec, base_dir)
    try:
        measure = measure_from_config(spec)
    except InvalidParameterError as e:
        raise _invalid(path, e) from e
    except KeyError as e:
        raise ConfigError(_join(path, e.args[0]), "required key is missing") from e
    if dim is not None and measure.dim != dim:
        raise ConfigError(path, f"measure has dimension {measure.dim}, expected {dim}")
    return spec


def _battery(data, key, prefix, dim, default=_MISSING):
    spec = _table(data, key, prefix, default)
    if spec is default:
        return spec
    path = _join(prefix, key)
    try:
        battery_from_config(spec, dim, default_box=Box.symmetric(dim, 1.0))
    except InvalidParameterError as e:
        raise ConfigError(_join(prefix, e.parameter), str(e)) from e
    except KeyError as e:
        raise ConfigError(_join(path, e.args[0]), "required key is missing") from e
    return copy.deepcopy(spec)


def _lyapunov(data, prefix):
    table = _table(data, "lyapunov", prefix, None)
    if table is None:
        return None
    path = _join(prefix, "lyapunov")
    _reject_unknown(table, {"powers", "target", "r_max", "points"}, path)
    powers = _vector(table, "powers", path, default=[2.0])
    if any(p < 2 for p in powers):
        raise ConfigError(_join(path, "powers"), "V = |x|^p needs p >= 2")
    return {
        "powers": powers,
        "target": _number(table, "target", path, 1.0, minimum=0, strict=True),
        "r_max": _number(table, "r_max", path, 10.0, minimum=0, strict=True),
        "points": _number(table, "points", path, 401, minimum=2, integer=True),
    }


# ==========================================
# 📋 タスクごとの節
# ==========================================


def _parse_certify(table, fp: FieldParams, seed, base_dir):
    prefix = "certify"
    _reject_unknown(
        table,
        {"criteria", "radius", "separation_floor", "sample_budget", "multistart_count", "margin_floor",
         "lambda", "example3_lambda", "moments"},
        prefix,
    )
    criteria = table.get("criteria", ["theorem1"])
    if not isinstance(criteria, list) or not criteria:
        raise ConfigError("certify.criteria", "must be a nonempty list")
    for name in criteria:
        if name not in CERTIFY_CRITERIA:
            raise ConfigError("certify.criteria", f"unknown criterion {name!r}; expected one of {list(CERTIFY_CRITERIA)}")
    out = {"criteria": list(dict.fromkeys(criteria))}
    out["radius"] = _number(table, "radius", prefix, None, minimum=0, strict=True)
    out["separation_floor"] = _number(table, "separation_floor", prefix, None, minimum=0, strict=True)
    out["sample_budget"] = _number(table, "sample_budget", prefix, None, minimum=0, strict=True, integer=True)
    out["multistart_count"] = _number(table, "multistart_count", prefix, None, minimum=0, integer=True)
    out["margin_floor"] = _number(table, "margin_floor", prefix, None, minimum=0)
    try:
        region = ScanRegion(
            out["radius"], out["separation_floor"], out["sample_budget"], out["multistart_count"], seed,
            out["margin_floor"],
        )
    except InvalidParameterError as e:
        raise _invalid(prefix, e) from e
    # 実行時に settings が変わっても同じ走査になるよう、解決済みの値を残す
    out.update({k: v for k, v in region.to_dict().items() if k != "rng_seed"})

    moments = _table(table, "moments", prefix, None)
    needs_lambda = {"theorem2", "corollary1"} & set(out["criteria"])
    if moments is not None:
        mpath = "certify.moments"
        _reject_unknown(moments, {"measure", "criterion", "radius"}, mpath)
        out["moments"] = {
            "measure": _measure(moments, "measure", mpath, fp.d, base_dir),
            "criterion": _choice(moments, "criterion", mpath, MOMENT_CRITERIA, "theorem1"),
            "radius": _number(moments, "radius", mpath, None, minimum=0, strict=True),
        }
        if out["moments"]["criterion"] in ("theorem2", "corollary1"):
            needs_lambda.add(out["moments"]["criterion"])
    elif "moments" in out["criteria"]:
        raise ConfigError("certify.moments", "required section is missing")
    else:
        out["moments"] = None

    if needs_lambda:
        spec = _table(table, "lambda", prefix)
        try:
            LambdaFunction.from_config(spec)
        except InvalidParameterError as e:
            raise _invalid(prefix, e) from e
        out["lambda"] = dict(spec)
    else:
        out["lambda"] = table.get("lambda")

    if "example3" in out["criteria"]:
        out["example3_lambda"] = _number(table, "example3_lambda", prefix, minimum=0, strict=True)
    else:
        out["example3_lambda"] = _number(table, "example3_lambda", prefix, None, minimum=0, strict=True)
    return out


def _initial_law(table, key, prefix, d):
    path = _join(prefix, key)
    spec = table.get(key)
    if spec is None:
        raise ConfigError(path, "required key is missing")
    if isinstance(spec, list):
        return _vector(table, key, prefix, d)
    if not isinstance(spec, dict):
        raise ConfigError(path, "must be a point or a table")
    try:
        sampler_from_config(spec, d)
    except InvalidParameterError as e:
        raise ConfigError(path, str(e)) from e
    except (KeyError, ValueError) as e:
        raise ConfigError(path, f"invalid initial law: {e}") from e
    return dict(spec)


def _parse_simulate(table, fp: FieldParams, seed, base_dir):
    prefix = "simulate"
    _reject_unknown(
        table,
        {"h", "T", "K", "init", "fit_window", "snapshots", "block_size", "dump_states", "w2_times", "invariant"},
        prefix,
    )
    out = {
        "h": _number(table, "h", prefix, minimum=0, strict=True),
        "T": _number(table, "T", prefix, minimum=0, strict=True),
        "K": _number(table, "K", prefix, minimum=1, integer=True),
    }
    if out["T"] < out["h"]:
        raise ConfigError("simulate.T", "horizon must be >= h")
    init = _table(table, "init", prefix)
    _reject_unknown(init, {"x", "y"}, "simulate.init")
    out["init"] = {
        "x": _initial_law(init, "x", "simulate.init", fp.d),
        "y": _initial_law(init, "y", "simulate.init", fp.d),
    }
    window = _vector(table, "fit_window", prefix, 2, None)
    if window is not None and not 0 <= window[0] < window[1] <= out["T"]:
        raise ConfigError("simulate.fit_window", f"need 0 <= t0 < t1 <= T, got {window}")
    out["fit_window"] = window
    out["snapshots"] = _number(table, "snapshots", prefix, None, minimum=1, integer=True)
    out["block_size"] = _number(table, "block_size", prefix, None, minimum=1, integer=True)
    out["dump_states"] = _boolean(table, "dump_states", prefix, False)
    out["w2_times"] = _vector(table, "w2_times", prefix, default=[])

    inv = _table(table, "invariant", prefix, None)
    if inv is not None:
        ipath = "simulate.invariant"
        _reject_unknown(inv, {"h", "burn_in", "T", "stride", "chains", "x0", "battery"}, ipath)
        inv_out = {
            "h": _number(inv, "h", ipath, out["h"], minimum=0, strict=True),
            "burn_in": _number(inv, "burn_in", ipath, minimum=0),
            "T": _number(inv, "T", ipath, minimum=0, strict=True),
            "stride": _number(inv, "stride", ipath, 1, minimum=1, integer=True),
            "chains": _number(inv, "chains", ipath, 1, minimum=1, integer=True),
            "x0": _vector(inv, "x0", ipath, fp.d, None),
            "battery": _battery(inv, "battery", ipath, fp.d, None),
        }
        if not inv_out["T"] > inv_out["burn_in"]:
            raise ConfigError("simulate.invariant.T", "need T > burn_in")
        out["invariant"] = inv_out
    else:
        out["invariant"] = None
    return out


def _parse_solve(table, fp: FieldParams, seed, base_dir):
    prefix = "solve"
    _reject_unknown(
        table, {"domain", "n", "box", "nx", "ny", "reference", "battery", "lyapunov", "residual_tolerance"}, prefix
    )
    out = {}
    if fp.d == 1:
        domain = _vector(table, "domain", prefix, 2, [-8.0, 8.0])
        if not domain[1] > domain[0]:
            raise ConfigError("solve.domain", "need lo < hi")
        out["domain"] = domain
        out["n"] = _number(table, "n", prefix, 1024, minimum=16, integer=True)
    elif fp.d == 2:
        box = _table(table, "box", prefix, {"lower": [-6.0, -6.0], "upper": [6.0, 6.0]})
        _reject_unknown(box, {"lower", "upper"}, "solve.box")
        lower = _vector(box, "lower", "solve.box", 2)
        upper = _vector(box, "upper", "solve.box", 2)
        if not all(hi > lo for lo, hi in zip(lower, upper)):
            raise ConfigError("solve.box", "need lower < upper on both axes")
        out["box"] = {"lower": lower, "upper": upper}
        out["nx"] = _number(table, "nx", prefix, 128, minimum=4, integer=True)
        out["ny"] = _number(table, "ny", prefix, 128, minimum=4, integer=True)
    else:
        raise ConfigError("field.d", f"the solver supports d in (1, 2), got {fp.d}")
    out["reference"] = _measure(table, "reference", prefix, fp.d, base_dir, None)
    out["battery"] = _battery(table, "battery", prefix, fp.d, None)
    out["lyapunov"] = _lyapunov(table, prefix)
    out["residual_tolerance"] = _number(table, "residual_tolerance", prefix, 1e-3, minimum=0, strict=True)
    return out


def _parse_residual(table, fp: FieldParams, seed, base_dir):
    prefix = "residual"
    _reject_unknown(table, {"measure", "battery", "doubled", "cutoff", "residual_tolerance"}, prefix)
    doubled = _boolean(table, "doubled", prefix, False)
    dim = 2 * fp.d if doubled else fp.d
    out = {
        "doubled": doubled,
        "measure": _measure(table, "measure", prefix, dim, base_dir),
        "battery": _battery(table, "battery", prefix, dim),
        "residual_tolerance": _number(table, "residual_tolerance", prefix, 1e-4, minimum=0, strict=True),
    }
    if out["measure"].get("kind") in ("product", "diagonal") and not doubled:
        raise ConfigError("residual.doubled", "couplings need doubled = true")
    cutoff = _table(table, "cutoff", prefix, None)
    if cutoff is not None:
        if doubled:
            raise ConfigError("residual.cutoff", "cutoff telescoping applies to single measures only")
        cpath = "residual.cutoff"
        _reject_unknown(cutoff, {"function", "js"}, cpath)
        function = _table(cutoff, "function", cpath)
        _battery({"f": {"kind": "list", "functions": [function]}}, "f", cpath, dim)
        js = _vector(cutoff, "js", cpath, default=[1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        if any(j < 1 for j in js):
            raise ConfigError("residual.cutoff.js", "cutoff indices must be >= 1")
        out["cutoff"] = {"function": dict(function), "js": js}
    else:
        out["cutoff"] = None
    return out


def _parse_mollify(table, fp: FieldParams, seed, base_dir):
    prefix = "mollify"
    _reject_unknown(
        table,
        {"measure", "second_measure", "eps", "spacing_ratio", "battery", "psd_pairs", "export", "lyapunov",
         "residual_tolerance"},
        prefix,
    )
    if fp.d not in (1, 2):
        raise ConfigError("field.d", f"mollification supports d in (1, 2), got {fp.d}")
    eps = _vector(table, "eps", prefix)
    if not eps or any(not 0 < e < 1 for e in eps):
        raise ConfigError("mollify.eps", "need a nonempty list of values in (0, 1)")
    return {
        "measure": _measure(table, "measure", prefix, fp.d, base_dir),
        "second_measure": _measure(table, "second_measure", prefix, fp.d, base_dir, None),
        "eps": eps,
        "spacing_ratio": _number(table, "spacing_ratio", prefix, 0.125, minimum=0, strict=True),
        "battery": _battery(table, "battery", prefix, fp.d, None),
        "psd_pairs": _number(table, "psd_pairs", prefix, 10_000, minimum=0, integer=True),
        "export": _boolean(table, "export", prefix, True),
        "lyapunov": _lyapunov(table, prefix),
        "residual_tolerance": _number(table, "residual_tolerance", prefix, 1e-4, minimum=0, strict=True),
    }


def _parse_suite(table, fp, seed, base_dir):
    prefix = "paper-suite"
    _reject_unknown(table, {"quick", "criteria"}, prefix)
    criteria = table.get("criteria", list(SUITE_CRITERIA))
    if not isinstance(criteria, list) or not criteria or any(c not in SUITE_CRITERIA for c in criteria):
        raise ConfigError("paper-suite.criteria", f"must be a nonempty list drawn from {list(SUITE_CRITERIA)}")
    return {"quick": _boolean(table, "quick", prefix, False), "criteria": sorted(set(int(c) for c in criteria))}


_TASK_PARSERS = {
    "certify": _parse_certify,
    "simulate": _parse_simulate,
    "solve": _parse_solve,
    "residual": _parse_residual,
    "mollify": _parse_mollify,
    "paper-suite": _parse_suite,
}


# ==========================================
# 📄 Scenario
# ==========================================


@dataclass(frozen=True)
class Scenario:
    """
    検証済みのシナリオ。params はタスク節を既定値で埋めたもの。
    output_dir は report.json に含めない (出力先を変えてもレポートは同一)。
    """

    name: str
    task: str
    seed: int
    field: Optional[FieldParams]
    params: dict
    expect: Optional[str] = None
    output_dir: Optional[str] = None

    def with_overrides(self, seed=None, output_dir=None) -> "Scenario":
        changes = {}
        if seed is not None:
            if int(seed) < 0:
                raise ConfigError("seed", "must be a nonnegative integer")
            changes["seed"] = int(seed)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        if not changes:
            return self
        # 走査領域のシードは Scenario のシードから作るので、節ごと作り直す
        return parse_scenario({**self.to_dict(), "seed": changes.get("seed", self.seed)}, output_dir=changes.get(
            "output_dir", self.output_dir))

    def build_field(self) -> CoefficientField:
        if self.field is None:
            raise ConfigError("field", "this scenario has no field section")
        return build_field(self.field)

    def to_dict(self):
        out = {"name": self.name, "task": self.task, "seed": self.seed, self.task: copy.deepcopy(self.params)}
        if self.expect is not None:
            out["expect"] = self.expect
        if self.field is not None:
            out["field"] = self.field.to_dict()
        return out

    @classmethod
    def from_dict(cls, data, base_dir=None) -> "Scenario":
        return parse_scenario(data, base_dir)


def _drop_none(value):
    """JSON 由来の null は「未指定」として扱う"""
    if isinstance(value, dict):
        return {k: _drop_none(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_drop_none(v) for v in value]
    return value


def parse_scenario(data: dict, base_dir=None, output_dir=None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a table")
    data = _drop_none(data)
    base_dir = Path(base_dir) if base_dir is not None else None
    task = _choice(data, "task", "", TASKS)
    _reject_unknown(data, {"name", "task", "seed", "expect", "output_dir", "field", task}, "")
    name = data.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ConfigError("name", "required key is missing")
    seed = _number(data, "seed", "", 0, minimum=0, integer=True)
    expect = _choice(data, "expect", "", EXPECTATIONS, None)

    if task == "paper-suite" and "field" not in data:
        fp = None
    else:
        fp = _parse_field(_table(data, "field", ""), base_dir)
    params = _TASK_PARSERS[task](_table(data, task, "", {}), fp, seed, base_dir)

    if output_dir is None:
        output_dir = data.get("output_dir")
        if output_dir is not None and base_dir is not None and not Path(output_dir).is_absolute():
            output_dir = str(base_dir / output_dir)
    return Scenario(name.strip(), task, seed, fp, params, expect, output_dir)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("config", f"invalid TOML in {path}: {e}") from e
    scenario = parse_scenario(data, path.parent.resolve())
    logger.info("loaded scenario %s (%s) from %s", scenario.name, scenario.task, path)
    return scenario
