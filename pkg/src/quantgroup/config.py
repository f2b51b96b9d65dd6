"""Run configuration.

A configuration is a UTF-8 JSON document::

    {
      "group": "bianchi(V)",
      "grid": {"axes": [{"lo": -4.4, "hi": 4.4, "count": 11},
                        {"lo": -4.4, "hi": 4.4, "count": 11},
                        {"lattice": 6, "step": 0.5}]},
      "dual": {"lambda": {"count": 32}},
      "tau": ["kohn_nirenberg", "right"],
      "test_functions": [{"kind": "gaussian", "width": [1.2, 1.2, 0.6]}, ...],
      "seed": 0,
      "levels": 3,
      "options": {...},
      "tolerances": {"parseval_residual": 0.05},
      "output": {"path": "report.csv", "format": "csv"}
    }

Every field except ``group`` is optional; missing fields come from the
preset of the requested check. Errors name the offending field and, for
malformed JSON, the line.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from . import groups as G
from .grids import Axis, GridError, GroupGrid, lattice_axis
from .quantization import TAU_NAMES, QuantizationError, UnsupportedOrderingError, tau_map
from .testfunctions import KINDS as FUNCTION_KINDS

FIELDS = ("group", "grid", "dual", "tau", "test_functions", "seed", "levels", "options", "tolerances",
          "output", "check")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Raised for unparsable or inconsistent configurations."""


@dataclass
class RunConfig:
    """Validated run configuration."""

    group: G.GroupSpec
    axes: list
    dual: dict = field(default_factory=dict)
    tau: list = field(default_factory=lambda: ["kohn_nirenberg"])
    test_functions: list = field(default_factory=list)
    seed: int = 0
    levels: int = 1
    options: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    check: str | None = None
    raw: dict = field(default_factory=dict)

    def grid(self, level: int = 0) -> GroupGrid:
        """Group grid refined ``level`` times."""
        grid = GroupGrid(self.group, self.axes)
        for _ in range(level):
            grid = grid.refined()
        return grid

    def digest(self) -> str:
        """Hash of the canonical JSON form (used in report metadata)."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _axis(spec, where: str, group: G.GroupSpec, k: int) -> Axis:
    if isinstance(spec, Axis):
        return spec
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    default_periodic = group.kind == "euclidean" or (group.kind == "affine_line" and k == 2)
    scale = spec.get("scale", "geometric" if group.kind in ("affine", "affine_line") and k == 0 else "linear")
    try:
        if "lattice" in spec:
            half = spec["lattice"]
            if not isinstance(half, int) or half < 0:
                raise ConfigError(f"{where}.lattice: must be a non-negative integer")
            step = float(spec.get("step", 0))
            if not step > 0:
                raise ConfigError(f"{where}.step: must be positive")
            return lattice_axis(half, step, scale)
        for key in ("lo", "hi", "count"):
            if key not in spec:
                raise ConfigError(f"{where}.{key}: missing")
        count = spec["count"]
        if not isinstance(count, int) or count < 1:
            raise ConfigError(f"{where}.count: must be a positive integer")
        return Axis(float(spec["lo"]), float(spec["hi"]), count, scale,
                    bool(spec.get("periodic", default_periodic)))
    except (GridError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


_MERGED = ("options", "tolerances", "output")


def from_dict(data: dict, defaults: dict | None = None) -> RunConfig:
    """Validate a configuration mapping, filling gaps from ``defaults``."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(FIELDS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    merged = copy.deepcopy(defaults or {})
    for key, value in copy.deepcopy(data).items():
        # Option-like tables merge key by key; everything else replaces.
        if key in _MERGED and isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    if "group" not in merged:
        raise ConfigError("group: missing")
    try:
        group = G.parse_group(merged["group"])
    except G.GroupSpecError as exc:
        raise ConfigError(f"group: {exc}") from exc
    grid = merged.get("grid")
    if not isinstance(grid, dict) or not isinstance(grid.get("axes"), list):
        raise ConfigError("grid.axes: missing or not a list")
    if len(grid["axes"]) != group.chart_dim:
        raise ConfigError(f"grid.axes: {group.label} needs {group.chart_dim} axes")
    axes = [_axis(a, f"grid.axes[{k}]", group, k) for k, a in enumerate(grid["axes"])]
    try:
        GroupGrid(group, axes)
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    tau = merged.get("tau", ["kohn_nirenberg"])
    tau = [tau] if isinstance(tau, str) else list(tau)
    names = []
    for k, t in enumerate(tau):
        try:
            names.append(tau_map(t, group).name)
        except UnsupportedOrderingError:
            raise
        except QuantizationError as exc:
            raise ConfigError(f"tau[{k}]: {exc}") from exc
    funcs = merged.get("test_functions", [])
    if not isinstance(funcs, list):
        raise ConfigError("test_functions: expected a list")
    for k, spec in enumerate(funcs):
        if not isinstance(spec, dict) or spec.get("kind") not in FUNCTION_KINDS:
            raise ConfigError(f"test_functions[{k}].kind: unknown builtin (choose from {FUNCTION_KINDS})")
    seed = merged.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed: must be an integer")
    levels = merged.get("levels", 1)
    if not isinstance(levels, int) or isinstance(levels, bool) or levels < 1:
        raise ConfigError("levels: must be an integer >= 1")
    for name in ("dual", "options", "tolerances", "output"):
        if not isinstance(merged.get(name, {}), dict):
            raise ConfigError(f"{name}: expected an object")
    for key, val in merged.get("tolerances", {}).items():
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(f"tolerances.{key}: must be a number")
    fmt = merged.get("output", {}).get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"output.format: choose from {FORMATS}")
    return RunConfig(group=group, axes=axes, dual=dict(merged.get("dual", {})), tau=names,
                     test_functions=funcs, seed=seed, levels=levels,
                     options=dict(merged.get("options", {})),
                     tolerances={k: float(v) for k, v in merged.get("tolerances", {}).items()},
                     output=dict(merged.get("output", {})), check=merged.get("check"), raw=merged)


def parse_text(text: str, defaults: dict | None = None) -> RunConfig:
    """Parse a JSON configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(data, defaults)


def load(path, defaults: dict | None = None) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_text(text, defaults)


def read_json(path) -> dict:
    """Raw JSON mapping of a configuration file (for merging with presets)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    return data


__all__ = ["ConfigError", "RunConfig", "from_dict", "parse_text", "load", "read_json", "TAU_NAMES"]
