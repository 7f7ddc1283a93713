"""TOML scenario and matrix files.

A scenario file is a flat table; every key is optional and unknown keys are
rejected::

    network_size = 250
    setup = "R"            # R, S or B
    churn = "0/40"         # none, 0/1, 1/1, 0/19, 0/40, 10/10 or "<joins>/<removals>"
    churn_cycle_minutes = 10
    traffic = true
    k = 20
    b = 160
    alpha = 3
    passes = 5
    seed = 0
    snapshot_period = 10
    duration = 360

plus the less common engine knobs listed in :data:`SCENARIO_KEYS`.

A matrix file lists value sets for the five dimensions and may carry any
scenario key as a shared default::

    sizes = [250, 2500]
    setups = ["R", "S", "B"]
    churn = ["none", "0/1", "1/1", "0/19", "0/40"]
    traffic = [false, true]
    k = [5, 10, 20, 30]
    duration = 360
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, fields
from typing import Any

import tomli

from .kademlia import KademliaParams
from .simulator import ChurnSpec, ScenarioConfig

__all__ = [
    "ConfigError",
    "SCENARIO_KEYS",
    "MATRIX_DIMENSIONS",
    "Matrix",
    "scenario_from_mapping",
    "load_scenario",
    "load_matrix",
    "parse_matrix",
]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None, path: str | None = None):
        self.field = field
        self.path = path
        where = ": ".join(p for p in (path, field) if p)
        super().__init__(f"{where}: {message}" if where else message)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


# key -> (type check, type name)
SCENARIO_KEYS: dict[str, tuple[Any, str]] = {
    "network_size": (_is_int, "integer"),
    "setup": (lambda v: isinstance(v, str), "string"),
    "churn": (lambda v: isinstance(v, str), "string"),
    "churn_cycle_minutes": (_is_int, "integer"),
    "traffic": (lambda v: isinstance(v, bool), "boolean"),
    "k": (_is_int, "integer"),
    "b": (_is_int, "integer"),
    "alpha": (_is_int, "integer"),
}
_ENGINE_KEYS = [
    f.name for f in fields(ScenarioConfig) if f.name not in ("network_size", "setup", "churn", "traffic", "params")
]
for _name in _ENGINE_KEYS:
    _default = getattr(ScenarioConfig(), _name)
    if isinstance(_default, bool):
        SCENARIO_KEYS[_name] = (lambda v: isinstance(v, bool), "boolean")
    else:
        SCENARIO_KEYS[_name] = (_is_int, "integer")

# dimension key -> scenario key, in expansion order
MATRIX_DIMENSIONS = {"sizes": "network_size", "setups": "setup", "churn": "churn", "traffic": "traffic", "k": "k"}


def _check_types(data: dict[str, Any], allowed: dict[str, tuple[Any, str]], path: str | None) -> None:
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", key, path)
        check, type_name = allowed[key]
        if not check(value):
            raise ConfigError(f"expected {type_name}, got {value!r}", key, path)


def scenario_from_mapping(data: dict[str, Any], path: str | None = None) -> ScenarioConfig:
    _check_types(data, SCENARIO_KEYS, path)
    data = dict(data)
    try:
        churn = ChurnSpec.parse(data.pop("churn", "none"), data.pop("churn_cycle_minutes", None))
    except ValueError as exc:
        raise ConfigError(str(exc), "churn", path) from None
    params_args = {key: data.pop(key) for key in ("b", "k", "alpha") if key in data}
    try:
        params = KademliaParams(**params_args)
    except ValueError as exc:
        raise ConfigError(str(exc), next(iter(params_args), "k"), path) from None
    try:
        return ScenarioConfig(churn=churn, params=params, **data)
    except ValueError as exc:
        message = str(exc)
        field = next((key for key in sorted(data, key=len, reverse=True) if message.startswith(key)), None)
        if field is None:
            field = next((key for key in data if key in message), None)
        raise ConfigError(message, field, path) from None


def _load_toml(path: str | os.PathLike) -> dict[str, Any]:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return tomli.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"not valid TOML: {exc}", path=str(path)) from None


def load_scenario(path: str | os.PathLike) -> ScenarioConfig:
    """Read one scenario file. ``OSError`` propagates for unreadable files."""
    return scenario_from_mapping(_load_toml(path), str(path))


@dataclass(frozen=True)
class Matrix:
    dimensions: dict[str, tuple[Any, ...]]
    base: dict[str, Any]

    def expand(self) -> list[ScenarioConfig]:
        """Cross product in the order sizes, setups, churn, traffic, k."""
        names = list(MATRIX_DIMENSIONS)
        configs = []
        for combo in itertools.product(*(self.dimensions[name] for name in names)):
            data = dict(self.base)
            data.update({MATRIX_DIMENSIONS[name]: value for name, value in zip(names, combo)})
            configs.append(scenario_from_mapping(data))
        return configs

    def __len__(self) -> int:
        total = 1
        for values in self.dimensions.values():
            total *= len(values)
        return total


DEFAULT_MATRIX = {
    "sizes": (250, 2500),
    "setups": ("R", "S", "B"),
    "churn": ("none", "0/1", "1/1", "0/19", "0/40"),
    "traffic": (False, True),
    "k": (5, 10, 20, 30),
}


def parse_matrix(data: dict[str, Any], path: str | None = None) -> Matrix:
    """Dimensions missing from ``data`` take their value sets from :data:`DEFAULT_MATRIX`."""
    dimensions: dict[str, tuple[Any, ...]] = {}
    base = {}
    for key, value in data.items():
        if key in MATRIX_DIMENSIONS:
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a non-empty list", key, path)
            if len(set(value)) != len(value):
                raise ConfigError("duplicate values", key, path)
            check, type_name = SCENARIO_KEYS[MATRIX_DIMENSIONS[key]]
            for item in value:
                if not check(item):
                    raise ConfigError(f"expected a list of {type_name} values, got {item!r}", key, path)
            dimensions[key] = tuple(value)
        elif key in ("network_size", "setup"):
            raise ConfigError("matrix dimensions are given as lists under sizes, setups, churn, traffic, k", key, path)
        else:
            base[key] = value
    _check_types(base, SCENARIO_KEYS, path)
    for name, default in DEFAULT_MATRIX.items():
        dimensions.setdefault(name, default)
    matrix = Matrix({name: dimensions[name] for name in MATRIX_DIMENSIONS}, base)
    # validate every combination up front, so a typo fails before any run
    for name, values in matrix.dimensions.items():
        for value in values:
            scenario_from_mapping({**base, MATRIX_DIMENSIONS[name]: value}, path)
    return matrix


def load_matrix(path: str | os.PathLike) -> Matrix:
    return parse_matrix(_load_toml(path), str(path))
