"""Study configuration files (TOML).

Top-level keys mirror :class:`StudyConfig`; dimensions and requirements are
arrays of tables::

    model = "casestudy"            # or a path to a model file
    query = 'Pmax=? [ !"service" U "service" ]'
    rho = 0.9
    horizon_scale = 2

    [[dimension]]
    name = "v"
    kind = "action_guard"
    values = [1, 2, 3]
    feature = [1, 2, 4]            # optional, defaults to values
    constraint = "speed <= $v"

    [[requirement]]
    name = "risk"
    dimension = "v"
    shape = "sigmoid"              # sigmoid | linear_ramp | piecewise_linear | constant
    center = 7.5
    slope = 1.0                    # or preset = "very_fast"

    [casestudy]                    # generator parameters when model = "casestudy"
    grid_w = 5
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .explorer import StudyConfig
from .fuzzy import PRESETS, Constant, LinearRamp, PiecewiseLinear, Sigmoid, TNorm, VagueRequirement
from .lattice import ConstraintTemplate, DesignDimension

SCALAR_KEYS = (
    "model", "query", "rho", "mode", "start", "compute_lower", "deadlock_mode",
    "tolerance", "mu_mode", "horizon_scale", "workers",
)


class ConfigError(ValueError):
    pass


def _shape(t: Mapping[str, Any]):
    if "preset" in t:
        try:
            return PRESETS[t["preset"]]
        except KeyError:
            raise ConfigError(f"unknown preset {t['preset']!r}; choose from {sorted(PRESETS)}") from None
    kind = t.get("shape")
    try:
        if kind == "sigmoid":
            return Sigmoid(float(t["center"]), float(t["slope"]))
        if kind in ("linear_ramp", "linear", "ramp"):
            return LinearRamp(float(t["full"]), float(t["zero"]))
        if kind in ("piecewise_linear", "piecewise"):
            return PiecewiseLinear(tuple(tuple(p) for p in t["points"]))
        if kind == "constant":
            return Constant(float(t["value"]))
    except KeyError as exc:
        raise ConfigError(f"requirement {t.get('name')!r}: shape {kind!r} needs parameter {exc}") from None
    raise ConfigError(f"requirement {t.get('name')!r}: unknown shape {kind!r}")


def _dimension(t: Mapping[str, Any]) -> DesignDimension:
    for key in ("name", "kind", "values"):
        if key not in t:
            raise ConfigError(f"dimension table missing {key!r}")
    return DesignDimension(t["name"], t["kind"], tuple(t["values"]), t.get("constraint"), t.get("feature"))


def from_dict(data: Mapping[str, Any], base_dir: Path | None = None) -> StudyConfig:
    unknown = set(data) - set(SCALAR_KEYS) - {"tnorm", "dimension", "requirement", "casestudy"}
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    kw = {k: data[k] for k in SCALAR_KEYS if k in data}
    try:
        if "tnorm" in data:
            kw["tnorm"] = TNorm(data["tnorm"])
        kw["dimensions"] = tuple(_dimension(t) for t in data.get("dimension", ()))
        kw["requirements"] = tuple(
            VagueRequirement(t["name"], _shape(t), t["dimension"]) for t in data.get("requirement", ())
        )
        if "casestudy" in data:
            from .casestudy import HomecareParams

            params = dict(data["casestudy"])
            for key in ("charger", "robot_init", "human_init"):
                if key in params:
                    params[key] = tuple(params[key])
            kw["casestudy_params"] = HomecareParams(**params)
        return StudyConfig(base_dir=base_dir, **kw)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data, base_dir=path.parent)


# -- writing ---------------------------------------------------------------


def _value(v: Any) -> str:
    # JSON literals for strings, numbers, booleans and arrays are valid TOML
    if isinstance(v, tuple):
        v = list(v)
    if isinstance(v, list):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    return json.dumps(v)


def _shape_fields(fn) -> dict[str, Any]:
    for name, preset in PRESETS.items():
        if fn == preset:
            return {"preset": name}
    if isinstance(fn, Sigmoid):
        return {"shape": "sigmoid", "center": fn.center, "slope": fn.slope}
    if isinstance(fn, LinearRamp):
        return {"shape": "linear_ramp", "full": fn.full, "zero": fn.zero}
    if isinstance(fn, PiecewiseLinear):
        return {"shape": "piecewise_linear", "points": [list(p) for p in fn.points]}
    return {"shape": "constant", "value": fn.value}


def dump_config(cfg: StudyConfig) -> str:
    """TOML text that :func:`load_config` reads back into an equivalent study."""
    defaults = StudyConfig.__dataclass_fields__
    lines = []
    for key in SCALAR_KEYS:
        val = getattr(cfg, key)
        if key in ("model", "query", "rho") or val != defaults[key].default:
            lines.append(f"{key} = {_value(val)}")
    lines.append(f"tnorm = {_value(cfg.tnorm.kind)}")
    for d in cfg.dimensions:
        lines += ["", "[[dimension]]", f"name = {_value(d.name)}", f"kind = {_value(d.kind)}", f"values = {_value(d.values)}"]
        if d.feature is not None:
            lines.append(f"feature = {_value(d.feature)}")
        if d.constraint is not None:
            if isinstance(d.constraint, ConstraintTemplate):
                text = d.constraint.text
            elif isinstance(d.constraint, str):
                text = d.constraint
            else:
                raise ConfigError(f"dimension {d.name}: only template constraints can be written to a file")
            lines.append(f"constraint = {_value(text)}")
    for r in cfg.requirements:
        lines += ["", "[[requirement]]", f"name = {_value(r.name)}", f"dimension = {_value(r.dimension)}"]
        lines += [f"{k} = {_value(v)}" for k, v in _shape_fields(r.fn).items()]
    if cfg.casestudy_params is not None:
        lines += ["", "[casestudy]"]
        lines += [f"{k} = {_value(v)}" for k, v in dataclasses.asdict(cfg.casestudy_params).items()]
    return "\n".join(lines) + "\n"
