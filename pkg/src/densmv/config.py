"""Flat ``key = value`` run configuration with ``[section]`` headers and dotted keys.

    seed = 7
    [scheme]
    n = 32
    N = 100000
    [drift]
    name = burgers_clamp
    C = 1.0

Lines starting with ``#`` or ``;`` are comments. A key may also be written
in dotted form (``scheme.n = 32``) outside any section. Values are parsed as
int, float, bool or comma-separated lists; anything else stays a string.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_value", "SCHEMA"]


class ConfigError(ValueError):
    """Bad configuration; ``key`` is the dotted key path, ``line`` the source line if known."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key:
            where += f"[{key}] "
        if line is not None:
            where += f"(line {line}) "
        super().__init__(where + message)
        self.key = key
        self.line = line


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    if isinstance(v, bool):
        raise ValueError("boolean where an integer is expected")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"not an integer: {v!r}")
        return int(v)
    return int(v)


def _listof(conv):
    def f(v):
        items = v if isinstance(v, list) else [v]
        return [conv(i) for i in items]

    return f


FLOATS = _listof(float)
INTS = _listof(_int)
STRS = _listof(str)

# section -> key -> converter; "*" admits free model parameters
SCHEMA: dict[str, dict] = {
    "": {"command": str, "seed": _int, "workers": _int},
    "scheme": {
        "n": _int,
        "N": _int,
        "T": float,
        "dim": _int,
        "density_mode": str,
        "accelerator": str,
        "radius_mult": float,
        "p": float,
        "record_every": _int,
        "record_times": FLOATS,
        "keep_clouds": str,
        "verify": _bool,
    },
    "drift": {"name": str, "*": None},
    "ic": {"family": str, "*": None},
    "output": {"x_min": float, "x_max": float, "points": _int, "plots": _bool},
    "converge": {
        "ns": INTS,
        "seeds": INTS,
        "reference": str,
        "fp_h": float,
        "times": FLOATS,
        "slope_max": float,
        "half_width_max": float,
        "require_monotone": _bool,
    },
    "duhamel": {
        "t": float,
        "x_min": float,
        "x_max": float,
        "points": _int,
        "nodes": _int,
        "ratio_max": float,
        "integral_tol": float,
    },
    "regularity": {
        "ns": INTS,
        "alpha": float,
        "modes": STRS,
        "max_points": _int,
        "radii": FLOATS,
        "w_slope_min": float,
        "w_slope_max": float,
        "holder_spread_max": float,
        "tail_slope_max": float,
    },
    "fp": {
        "h": float,
        "dt": float,
        "mode": str,
        "cfl": float,
        "margin": float,
        "save_times": FLOATS,
    },
    "assumptions": {
        "n_probes": _int,
        "dim": _int,
        "t_max": float,
        "x_radius": float,
        "r_max": float,
        "measure_size": _int,
        "measure_radius": float,
    },
}


def parse_value(raw: str):
    """int, float, bool, comma list (of those) or string."""
    s = raw.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)  # "section.key" -> value
    lines: dict = field(default_factory=dict)  # "section.key" -> source line

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, name) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def set(self, key, raw, line=None):
        sec, _, name = key.rpartition(".")
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section {sec!r}", key, line)
        table = SCHEMA[sec]
        if name in table:
            conv = table[name]
        elif "*" in table:
            conv = None
        else:
            raise ConfigError(f"unknown key {name!r}; allowed: {sorted(k for k in table if k != '*')}", key, line)
        value = parse_value(raw) if isinstance(raw, str) else raw
        if conv is not None:
            try:
                value = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", key, line) from None
        self.values[key] = value
        self.lines[key] = line

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))


def _key_path(section, key):
    return f"{section}.{key}" if section else key


def parse_config(text: str = "", overrides=()) -> RunConfig:
    """Parse config text, then apply ``KEY=VAL`` overrides in order."""
    cfg = RunConfig()
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"unterminated section header {line!r}", None, lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section; allowed: {sorted(s for s in SCHEMA if s)}", section, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", section or None, lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", section or None, lineno)
        path = _key_path(section, key) if "." not in key or section else key
        cfg.set(path, val, lineno)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be KEY=VAL, got {item!r}")
        key, _, val = item.partition("=")
        cfg.set(key.strip(), val)
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    text = ""
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
    return parse_config(text, overrides)
