"""Scenario configuration: INI-style parsing, validation, and serialization.

The format is flat sectioned key-value text so configs diff cleanly and
error messages can name the exact field. Unknown sections or keys are
rejected rather than ignored; silently dropped settings are how experiments
rot. Parsed configs are plain frozen dataclasses with pure-Python values so
equality (and therefore round-trip testing) is structural.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources

__all__ = [
    "ScenarioConfig",
    "ConfigError",
    "parse_config_text",
    "load_config",
    "serialize_config",
    "bundled_config_path",
    "bundled_config_names",
]

FILTER_MODES = ("off", "ecbf", "robust-ecbf")
UNCERTAINTY_MODES = ("none", "delay", "actuator")
IQC_SOURCES = ("none", "fit", "coefficients")
IQC_KINDS = ("delay", "actuator")


class ConfigError(ValueError):
    """Invalid configuration; the message lists every offending field."""


@dataclass(frozen=True)
class ScenarioConfig:
    """One closed-loop scenario, fully determined and hashable.

    Pairs are (x, y) tuples; ``gain`` is the 2x4 tracking gain row-major.
    ``tau``/``pole`` are required only by the matching uncertainty mode, and
    the iqc fields only when ``filter_mode`` is ``robust-ecbf``.
    """

    p0: tuple[float, float] = (-10.0, 0.0)
    v0: tuple[float, float] = (0.0, 0.0)
    obstacle_center: tuple[float, float] = (2.0, -0.2)
    obstacle_radius: float = 1.5
    gain: tuple[float, ...] = (1.0, 0.0, 1.94, 0.0, 0.0, 1.0, 0.0, 1.94)
    alpha: float = 5.0
    filter_mode: str = "ecbf"
    ref_start: tuple[float, float] = (-10.0, 0.0)
    ref_goal: tuple[float, float] = (10.0, 0.0)
    ramp_duration: float = 45.0
    hold_after: bool = True
    uncertainty_mode: str = "none"
    tau: float | None = None
    pole: float | None = None
    iqc_source: str = "none"
    iqc_kind: str = "delay"
    iqc_param_lo: float | None = None
    iqc_param_hi: float | None = None
    iqc_samples: int = 20
    iqc_margin: float = 0.02
    iqc_grid_lo: float = 1e-2
    iqc_grid_hi: float = 1e4
    iqc_grid_points: int = 400
    iqc_a: float | None = None
    iqc_b: float | None = None
    iqc_c: float | None = None
    iqc_d: float | None = None
    lambda_x: float = 0.1
    lambda_y: float = 0.1
    dt: float = 1e-3
    horizon: float = 60.0
    qcqp_tol: float = 1e-10
    out_csv: str = "trajectory.csv"
    out_summary: str = "summary.txt"
    out_svg: str = "trajectory.svg"


# Schema: section -> key -> (attribute, parser). Parsers raise ValueError on
# bad input; cross-field rules run after all fields are typed.
def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _parse_pair(s: str) -> tuple[float, float]:
    parts = s.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (_parse_float(parts[0]), _parse_float(parts[1]))


def _parse_gain(s: str) -> tuple[float, ...]:
    parts = s.replace(",", " ").split()
    if len(parts) != 8:
        raise ValueError("expected eight numbers (2x4 row-major)")
    return tuple(_parse_float(p) for p in parts)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean (true/false)")


def _parse_int(s: str) -> int:
    return int(s)


def _enum(*choices: str):
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"expected one of {choices}")
        return s

    return parse


def _parse_str(s: str) -> str:
    if not s:
        raise ValueError("must be non-empty")
    return s


_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "plant": {
        "p0": ("p0", _parse_pair),
        "v0": ("v0", _parse_pair),
        "obstacle_center": ("obstacle_center", _parse_pair),
        "obstacle_radius": ("obstacle_radius", _parse_float),
    },
    "controller": {
        "gain": ("gain", _parse_gain),
        "alpha": ("alpha", _parse_float),
        "filter": ("filter_mode", _enum(*FILTER_MODES)),
    },
    "reference": {
        "start": ("ref_start", _parse_pair),
        "goal": ("ref_goal", _parse_pair),
        "ramp_duration": ("ramp_duration", _parse_float),
        "hold_after": ("hold_after", _parse_bool),
    },
    "uncertainty": {
        "mode": ("uncertainty_mode", _enum(*UNCERTAINTY_MODES)),
        "tau": ("tau", _parse_float),
        "pole": ("pole", _parse_float),
    },
    "iqc": {
        "source": ("iqc_source", _enum(*IQC_SOURCES)),
        "kind": ("iqc_kind", _enum(*IQC_KINDS)),
        "param_lo": ("iqc_param_lo", _parse_float),
        "param_hi": ("iqc_param_hi", _parse_float),
        "samples": ("iqc_samples", _parse_int),
        "margin": ("iqc_margin", _parse_float),
        "grid_lo": ("iqc_grid_lo", _parse_float),
        "grid_hi": ("iqc_grid_hi", _parse_float),
        "grid_points": ("iqc_grid_points", _parse_int),
        "a": ("iqc_a", _parse_float),
        "b": ("iqc_b", _parse_float),
        "c": ("iqc_c", _parse_float),
        "d": ("iqc_d", _parse_float),
        "lambda_x": ("lambda_x", _parse_float),
        "lambda_y": ("lambda_y", _parse_float),
    },
    "numerics": {
        "dt": ("dt", _parse_float),
        "horizon": ("horizon", _parse_float),
        "qcqp_tol": ("qcqp_tol", _parse_float),
    },
    "output": {
        "trajectory_csv": ("out_csv", _parse_str),
        "summary": ("out_summary", _parse_str),
        "svg": ("out_svg", _parse_str),
    },
}

_ATTR_TO_FIELD = {
    attr: (section, key)
    for section, keys in _SCHEMA.items()
    for key, (attr, _) in keys.items()
}


def _cross_validate(cfg: ScenarioConfig, errors: list[str]) -> None:
    def bad(attr: str, msg: str) -> None:
        section, key = _ATTR_TO_FIELD[attr]
        errors.append(f"{section}.{key}: {msg}")

    if not cfg.obstacle_radius > 0.0:
        bad("obstacle_radius", f"must be positive, got {cfg.obstacle_radius}")
    if not cfg.alpha > 0.0:
        bad("alpha", f"must be positive, got {cfg.alpha}")
    if not cfg.ramp_duration > 0.0:
        bad("ramp_duration", f"must be positive, got {cfg.ramp_duration}")
    if not cfg.dt > 0.0:
        bad("dt", f"must be positive, got {cfg.dt}")
    if not cfg.horizon >= cfg.dt:
        bad("horizon", f"must cover at least one step of {cfg.dt}, got {cfg.horizon}")
    if not cfg.qcqp_tol > 0.0:
        bad("qcqp_tol", f"must be positive, got {cfg.qcqp_tol}")
    if cfg.uncertainty_mode == "delay":
        if cfg.tau is None:
            bad("tau", "required when mode = delay")
        elif cfg.tau < 0.0:
            bad("tau", f"must be >= 0, got {cfg.tau}")
    if cfg.uncertainty_mode == "actuator":
        if cfg.pole is None:
            bad("pole", "required when mode = actuator")
        elif not cfg.pole > 0.0:
            bad("pole", f"must be positive, got {cfg.pole}")
    for attr in ("lambda_x", "lambda_y"):
        val = getattr(cfg, attr)
        if not val > 0.0:
            bad(attr, f"must be positive, got {val}")
    if cfg.filter_mode == "robust-ecbf":
        if cfg.iqc_source == "none":
            bad("iqc_source", "robust-ecbf needs an iqc source (fit or coefficients)")
        elif cfg.iqc_source == "fit":
            if cfg.iqc_param_hi is None:
                bad("iqc_param_hi", "required when source = fit")
            elif not cfg.iqc_param_hi > 0.0:
                bad("iqc_param_hi", f"must be positive, got {cfg.iqc_param_hi}")
            if cfg.iqc_kind == "actuator" and cfg.iqc_param_lo is None:
                bad("iqc_param_lo", "required for an actuator family")
            if cfg.iqc_param_lo is not None and cfg.iqc_param_hi is not None:
                if not 0.0 <= cfg.iqc_param_lo < cfg.iqc_param_hi:
                    bad(
                        "iqc_param_lo",
                        f"need 0 <= param_lo < param_hi, got "
                        f"[{cfg.iqc_param_lo}, {cfg.iqc_param_hi}]",
                    )
            if cfg.iqc_samples < 2:
                bad("iqc_samples", f"must be >= 2, got {cfg.iqc_samples}")
            if cfg.iqc_margin < 0.0:
                bad("iqc_margin", f"must be >= 0, got {cfg.iqc_margin}")
            if not (0.0 < cfg.iqc_grid_lo < cfg.iqc_grid_hi):
                bad("iqc_grid_lo", "need 0 < grid_lo < grid_hi")
            if cfg.iqc_grid_points < 2:
                bad("iqc_grid_points", f"must be >= 2, got {cfg.iqc_grid_points}")
        elif cfg.iqc_source == "coefficients":
            missing = [k for k in ("a", "b", "c", "d") if getattr(cfg, f"iqc_{k}") is None]
            for k in missing:
                bad(f"iqc_{k}", "required when source = coefficients")
            if not missing and not cfg.iqc_a < 0.0:
                bad("iqc_a", f"filter must be stable (a < 0), got {cfg.iqc_a}")


def _apply_overrides(cp: configparser.ConfigParser, overrides, errors: list[str]) -> None:
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r}: expected section.key=value")
            continue
        target, value = item.split("=", 1)
        if "." not in target:
            errors.append(f"override {item!r}: expected section.key=value")
            continue
        section, key = target.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            errors.append(f"override {item!r}: unknown field {section}.{key}")
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def parse_config_text(
    text: str, source: str = "<config>", overrides=()
) -> ScenarioConfig:
    """Parse and validate a config from text, applying ``--set`` overrides.

    Overrides are raw strings in ``section.key=value`` form, inserted before
    typed parsing so they face the same validation as file contents.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep keys case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    errors: list[str] = []
    _apply_overrides(cp, overrides, errors)
    values: dict[str, object] = {}
    if cp.defaults():
        errors.append("top-level keys outside a section are not allowed")
    for section in cp.sections():
        keys = _SCHEMA.get(section)
        if keys is None:
            errors.append(f"unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            entry = keys.get(key)
            if entry is None:
                errors.append(f"unknown key {section}.{key}")
                continue
            attr, parser = entry
            try:
                values[attr] = parser(raw)
            except ValueError as exc:
                errors.append(f"{section}.{key}: {exc} (got {raw!r})")
    if not errors:
        cfg = ScenarioConfig(**values)
        _cross_validate(cfg, errors)
        if not errors:
            return cfg
    raise ConfigError(f"{source}: " + "; ".join(errors))


def load_config(path, overrides=()) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path), overrides=overrides)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; omits fields that are unset (None).

    ``parse_config_text(serialize_config(cfg))`` reproduces ``cfg`` exactly.
    """
    lines: list[str] = []
    for section, keys in _SCHEMA.items():
        body = []
        for key, (attr, _) in keys.items():
            value = getattr(cfg, attr)
            if value is None:
                continue
            body.append(f"{key} = {_fmt(value)}")
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def bundled_config_names() -> tuple[str, ...]:
    return ("nominal.cfg", "delay_nominal.cfg", "delay_robust.cfg")


def bundled_config_path(name: str):
    """Filesystem path to a bundled example config (context-manager free for
    an installed package backed by real files)."""
    ref = resources.files("safefilter").joinpath("configs", name)
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return ref
