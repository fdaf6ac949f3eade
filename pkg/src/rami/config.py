"""Flat ``key = value`` run configuration.

Keys carry a dotted section prefix (``branches.alpha = 0.8``); a
``[branches]`` header followed by bare keys is accepted as shorthand.  Unknown
keys and malformed values are input errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

_TOP = "__top__"

# section -> key -> (type, default)
_SEARCH = {
    "mass_quantum": (float, 0.05),
    "budget": (int, 500),
    "tree_budget": (int, 100),
    "tree_restarts": (int, 0),
    "mode": (str, "ascent"),
    "temperature": (float, 0.05),
    "cooling": (float, 0.995),
    "structural_interval": (int, 25),
    "spacing": (float, None),
    "radius": (float, 1.0),
}

SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"seed": (int, 0)},
    "irrigation": {"alpha": (float, 0.5), "budget": (int, 400), "restarts": (int, 2)},
    "sunlight": {"h": (float, 0.05), "nodes": (int, 32), "eta": (float, 1.0)},
    "harvest": {
        "L": (float, None), "h": (float, 0.05), "kappa": (float, 1.0), "M": (float, 1.0),
        "sigma": (float, 1.0), "a": (float, 1.0), "b": (float, 1.0),
        "tol": (float, 1e-9), "max_iter": (int, 500),
    },
    "branches": {
        "d": (int, 2), "alpha": (float, 1.0), "c": (float, 1.0), "nodes": (int, 16), "eta": (float, 1.0),
        "h": (float, 0.1), "halfcircle_beta": (float, 0.9), "n_arcs": (int, 32),
        "require_halfcircle": (bool, False), **_SEARCH,
    },
    "roots": {
        "d": (int, 2), "alpha": (float, 1.0), "c": (float, 1.0), "a": (float, 1.0), "b": (float, 1.0),
        "sigma": (float, 1.0), "kappa": (float, 1.0), "M": (float, 1.0), "L": (float, 3.0),
        "h": (float, 0.1), **_SEARCH,
    },
}


class ConfigError(ValueError):
    """Malformed configuration text or an unknown key."""


def _convert(kind, text: str, key: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind.__name__}") from None


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def set(self, dotted: str, text: str) -> None:
        section, _, key = dotted.strip().partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown configuration key {dotted.strip()!r}")
        kind, _ = SCHEMA[section][key]
        self.values.setdefault(section, {})[key] = _convert(kind, text, dotted)

    def section(self, name: str) -> dict:
        out = {k: default for k, (_, default) in SCHEMA[name].items()}
        out.update(self.values.get(name, {}))
        return out

    def seed(self) -> int:
        return self.section("run")["seed"]


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), interpolation=None,
                                       default_section="__defaults__")
    parser.optionxform = str  # keys are case sensitive (L, M)
    try:
        parser.read_string(f"[{_TOP}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        for key, value in parser.items(section, raw=True):
            cfg.set(key if section == _TOP else f"{section}.{key}", value)
    return cfg


def read_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not key=value")
        cfg.set(key, value)
    return cfg
