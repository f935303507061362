"""JSON experiment configuration: shipped defaults, file merging and ``key=value`` overrides."""

from __future__ import annotations

import copy
import json
from importlib import resources

__all__ = ["ConfigError", "load_schema", "defaults", "load_config", "apply_override", "validate", "describe"]


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("sdsm").joinpath("data/config_schema.json").read_text())


def _is_section(node):
    return "properties" in node


def defaults(schema=None):
    """The full default configuration as a nested dict."""
    schema = schema or load_schema()

    def build(node):
        return {k: build(v) if _is_section(v) else copy.deepcopy(v["default"]) for k, v in node["properties"].items()}

    return build(schema)


def describe(schema=None):
    """``[(dotted key, default, description), ...]`` for every leaf."""
    schema = schema or load_schema()
    out = []

    def walk(node, prefix):
        for k, v in node["properties"].items():
            key = f"{prefix}{k}"
            if _is_section(v):
                walk(v, key + ".")
            else:
                out.append((key, v["default"], v["description"]))

    walk(schema, "")
    return out


def _leaf(schema, path):
    node = schema
    for part in path:
        props = node.get("properties")
        if props is None or part not in props:
            raise ConfigError(f"unknown config key {'.'.join(path)!r}")
        node = props[part]
    return node


_CHECKS = {
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
    "any": lambda v: True,
}


def _merge(schema, base, update, prefix=()):
    for k, v in update.items():
        path = prefix + (k,)
        node = _leaf(schema, path)
        if _is_section(node):
            if not isinstance(v, dict):
                raise ConfigError(f"{'.'.join(path)} must be an object")
            _merge(schema, base[k], v, path)
        else:
            base[k] = copy.deepcopy(v)


def apply_override(config, assignment, schema=None):
    """Apply ``dotted.key=value``; the value is parsed as JSON, else kept as a string."""
    schema = schema or load_schema()
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    path = tuple(key.strip().split("."))
    node = _leaf(schema, path)
    if _is_section(node):
        raise ConfigError(f"{key} is a section; set its keys individually")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    target = config
    for part in path[:-1]:
        target = target[part]
    target[path[-1]] = value


def validate(config, schema=None):
    schema = schema or load_schema()

    def walk(node, cfg, prefix):
        for k, v in node["properties"].items():
            key = f"{prefix}{k}"
            if _is_section(v):
                walk(v, cfg[k], key + ".")
                continue
            val = cfg[k]
            if val is None and v.get("nullable"):
                continue
            if not _CHECKS[v["type"]](val):
                raise ConfigError(f"{key} must be of type {v['type']}, got {val!r}")

    walk(schema, config, "")
    fwd = config["forward"]
    if not fwd["theta"] > 0:
        raise ConfigError("forward.theta must be positive")
    if not fwd["dt_max"] > 0:
        raise ConfigError("forward.dt_max must be positive")
    if fwd["snapshots"] and fwd["horizon"] < max(fwd["snapshots"]):
        raise ConfigError("forward.horizon must be at least the last snapshot")
    if config["dual"]["m"] < 1:
        raise ConfigError("dual.m must be >= 1")
    return config


def load_config(path=None, overrides=()):
    """Defaults, then the JSON file at ``path``, then each ``key=value`` override."""
    schema = load_schema()
    config = defaults(schema)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("the config file must hold a JSON object")
        _merge(schema, config, user)
    for item in overrides:
        apply_override(config, item, schema)
    return validate(config, schema)
