"""Run configuration: a flat key=value file with one optional [section] level."""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError

log = logging.getLogger(__name__)

SCENARIOS = ("classical-ns", "smallness-sweep", "density-patch", "stokes-validation")
PRESETS = ("taylor-green",)
SWEEP_AXES = ("sigma", "u0_amp", "mu", "n")
MAX_SWEEP_POINTS = 16
LAWS = ("constant", "linear", "custom-poly")
SHAPES = ("disk", "ellipse", "star")

# sections whose keys are stored without a prefix
_FLAT_SECTIONS = ("run", "solver", "physics", "monitor", "patch")
_ALIASES = {"grid.n": "n", "grid.l": "L", "grid.L": "L", "u0.amp": "u0_amp", "u0.amplitude": "u0_amp"}


@dataclass
class RunConfig:
    scenario: str = "classical-ns"
    preset: str = "taylor-green"
    seed: int = 0
    out_dir: str = "out"
    deterministic: bool = False
    # grid
    n: int = 128
    L: float = 2.0 * math.pi * 16.0
    # physics
    mu: float = 1.0
    law: str = "linear"
    law_coefficients: tuple[float, ...] = ()
    u0_amp: float = 1.0
    u0_wavenumber: float = 1.0
    sigma: float = 0.02
    T: float = 1.0
    dt: float | None = None
    kappa: float = 0.5
    # analysis indices
    p: float = 3.5
    q: float = 3.5
    # patch
    shape: str = "disk"
    radius: float = 8.0
    semi_axes: tuple[float, ...] = (12.0, 6.0)
    molly_cells: float = 2.0
    markers: int = 512
    marker_substeps: int = 4
    # monitor knobs (configured constants)
    c0: float = 1e-2
    C0: float = 1.0
    c2: float = 1e-1
    lambda1: float = 8.0
    lambda2: float | None = None
    dictionary_size: int = 8
    warnings: list[str] = field(default_factory=list, compare=False)

    def with_value(self, key: str, value) -> RunConfig:
        return apply_overrides(self, {key: value})


def _coerce(name: str, raw):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    if raw is None:
        return None
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if "tuple" in ftype:
            text = text.strip("[]()")
            return tuple(float(x) for x in text.replace(",", " ").split()) if text else ()
        if ftype.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if ftype.startswith("int"):
            return int(text)
        if ftype.startswith("float"):
            if text.lower() in ("none", "auto", ""):
                return None
            return float(text)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc
    return text


def normalize_key(key: str) -> str:
    key = key.strip()
    key = _ALIASES.get(key, key)
    if key.startswith("grid."):
        key = key[5:]
    known = {f.name for f in fields(RunConfig)}
    if key == "l":
        key = "L"
    if key == "out":
        key = "out_dir"
    if key not in known or key == "warnings":
        raise ConfigurationError(f"unknown configuration key {key!r}")
    return key


def apply_overrides(cfg: RunConfig, values: dict) -> RunConfig:
    changes = {}
    for key, raw in values.items():
        name = normalize_key(key)
        if name == "law" and isinstance(raw, str) and raw.strip().startswith("custom-poly"):
            # "custom-poly [c0, c1, ...]" carries its coefficients inline
            head, _, rest = raw.strip().partition(" ")
            changes["law"] = head
            if rest.strip():
                changes["law_coefficients"] = _coerce("law_coefficients", rest)
            continue
        changes[name] = _coerce(name, raw)
    return replace(cfg, **changes)


def parse_config_text(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key if section in _FLAT_SECTIONS or "." in key else f"{section}.{key}"
            out[name] = value
    return out


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    text = Path(path).read_text()
    return apply_overrides(base or RunConfig(), parse_config_text(text))


def validate(cfg: RunConfig) -> RunConfig:
    """Check every precondition before compute; returns the config with warnings attached."""
    warnings: list[str] = []
    if cfg.scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(SCENARIOS)}")
    if cfg.preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {cfg.preset!r}; choose from {', '.join(PRESETS)}")
    p, q = cfg.p, cfg.q
    if not (1 < q <= p < 4):
        raise ConfigurationError(f"indices must satisfy 1 < q <= p < 4, got p={p}, q={q}")
    if 1 / q - 1 / p > 0.5 + 1e-12:
        raise ConfigurationError(f"indices must satisfy 1/q - 1/p <= 1/2, got {1 / q - 1 / p:.4f}")
    if 1 / p + 1 / q < 1:
        warnings.append(f"1/p + 1/q = {1 / p + 1 / q:.3f} < 1: uniqueness is not covered for these indices")
    if cfg.n < 8 or cfg.n & (cfg.n - 1):
        raise ConfigurationError(f"grid.n must be a power of two >= 8, got {cfg.n}")
    if not cfg.L > 0:
        raise ConfigurationError(f"grid.L must be positive, got {cfg.L}")
    if not cfg.mu > 0:
        raise ConfigurationError(f"mu must be positive, got {cfg.mu}")
    if cfg.T < 0:
        raise ConfigurationError(f"T must be nonnegative, got {cfg.T}")
    if cfg.dt is not None and not cfg.dt > 0:
        raise ConfigurationError(f"dt must be positive, got {cfg.dt}")
    if not 0 < cfg.kappa <= 0.5:
        raise ConfigurationError(f"kappa must lie in (0, 1/2], got {cfg.kappa}")
    if not abs(cfg.sigma) < 1:
        raise ConfigurationError(f"sigma must satisfy |sigma| < 1, got {cfg.sigma}")
    if cfg.law not in LAWS:
        raise ConfigurationError(f"unknown law {cfg.law!r}; choose from {', '.join(LAWS)}")
    if cfg.law == "custom-poly" and not cfg.law_coefficients:
        raise ConfigurationError("custom-poly law needs coefficients, e.g. law = custom-poly [1, 0.5]")
    if cfg.shape not in SHAPES:
        raise ConfigurationError(f"unknown shape {cfg.shape!r}; choose from {', '.join(SHAPES)}")
    if cfg.markers < 256:
        raise ConfigurationError(f"markers must be at least 256, got {cfg.markers}")
    if cfg.molly_cells <= 0:
        raise ConfigurationError("molly_cells must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    for w in warnings:
        log.warning(w)
    return replace(cfg, warnings=warnings)


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    axis, sep, values = spec.partition("=")
    axis = axis.strip()
    if not sep:
        raise ConfigurationError(f"sweep must look like axis=v1,v2,..., got {spec!r}")
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad sweep values in {spec!r}") from exc
    if len(vals) > MAX_SWEEP_POINTS:
        raise ConfigurationError(f"at most {MAX_SWEEP_POINTS} sweep points, got {len(vals)}")
    if axis == "n":
        vals = [int(v) for v in vals]
    return axis, vals


def dump_config(cfg: RunConfig) -> str:
    """Round-trippable text form (warnings omitted)."""
    lines = []
    for f in fields(RunConfig):
        if f.name in ("warnings", "out_dir"):
            continue
        v = getattr(cfg, f.name)
        if v is None:
            text = "auto"
        elif isinstance(v, tuple):
            text = "[" + ", ".join(repr(float(x)) for x in v) + "]"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
