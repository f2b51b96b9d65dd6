"""Default configurations per check and group.

A user configuration only needs ``group``; every other field falls back to
the preset of the requested check for that group.
"""

from __future__ import annotations

import copy

from . import groups as G

_FAMILY_1D = [
    {"kind": "gaussian", "center": [0.0], "width": [1.0]},
    {"kind": "bump", "center": [0.3], "width": [3.0]},
    {"kind": "hermite", "order": [1], "center": [-0.2], "width": [1.1]},
]
# Narrow in log a: the left Haar density grows towards small a.
_FAMILY_AFFINE = [
    {"kind": "gaussian", "width": [0.6, 1.0]},
    {"kind": "bump", "width": [2.0, 4.0]},
    {"kind": "hermite", "order": [1, 1], "width": [0.6, 1.0]},
]
_FAMILY_V = [
    {"kind": "gaussian", "center": [0, 0, 0], "width": [1.2, 1.2, 0.6]},
    {"kind": "bump", "center": [0.3, -0.2, 0.1], "width": [3.0, 3.0, 2.2]},
    {"kind": "hermite", "order": [1, 0, 1], "center": [0, 0.3, 0], "width": [1.1, 1.3, 0.6]},
]
_FAMILY_AFFINE_LINE = [
    {"kind": "gaussian", "width": [0.6, 1.0, 1.0]},
    {"kind": "bump", "width": [2.0, 4.0, 3.0]},
    {"kind": "hermite", "order": [1, 1, 0], "width": [0.6, 1.0, 1.0]},
]

_TAUS = ["kohn_nirenberg", "right", "euclidean_weyl"]
_TAUS_NONABELIAN = ["kohn_nirenberg", "right"]

_EUCLIDEAN_QUANT = {
    "group": "euclidean(1)",
    "grid": {"axes": [{"lo": -8.0, "hi": 8.0, "count": 128}]},
    "dual": {"axes": [{"lo": -4.0, "hi": 4.0, "count": 128}]},
    "tau": _TAUS,
    "test_functions": _FAMILY_1D,
    "levels": 1,
    "options": {"z": [[0.5], [-1.25]]},
}

_AFFINE_QUANT = {
    "group": "affine",
    "grid": {"axes": [{"lattice": 35, "step": 0.1, "scale": "geometric"}, {"lo": -10.0, "hi": 10.0, "count": 160}]},
    "tau": _TAUS_NONABELIAN,
    "test_functions": _FAMILY_AFFINE,
    "levels": 2,
    "options": {
        "rows": [[1.0, 0.0], [1.2, 0.3], [0.85, -0.3]],
        "symbol_functions": [
            {"kind": "gaussian", "center": [1.0, 0.0], "width": [0.5, 0.8]},
            {"kind": "gaussian", "center": [1.1, 0.2], "width": [0.45, 0.9], "freq": [0.0, 0.1]},
        ],
        "probe_functions": [
            {"kind": "gaussian", "center": [1.1, 0.2], "width": [0.6, 1.0]},
            {"kind": "hermite", "order": [1, 0], "center": [0.9, -0.2], "width": [0.7, 1.2]},
        ],
        "z": [[1.2214027581601699, 0.25]],
    },
}

# Narrow enough in (a, b) that x y^-1 stays in the box, where e^-c rescales a and b.
_V_QUANT = {
    "group": "bianchi(V)",
    "grid": {"axes": [{"lo": -7.0, "hi": 7.0, "count": 41}, {"lo": -7.0, "hi": 7.0, "count": 41},
                      {"lattice": 12, "step": 0.25}]},
    "dual": {"lambda": {"count": 64}},
    "tau": _TAUS_NONABELIAN,
    "test_functions": _FAMILY_V,
    "levels": 2,
    "options": {
        "rows": [[0.0, 0.0, 0.0], [0.5, -0.5, 0.25], [-0.5, 0.5, -0.25]],
        "symbol_functions": [
            {"kind": "gaussian", "center": [0, 0, 0], "width": [1.1, 1.1, 0.3]},
            {"kind": "gaussian", "center": [0.3, 0, 0.1], "width": [1.1, 1.1, 0.3], "freq": [0.1, 0, 0]},
        ],
        "probe_functions": [
            {"kind": "gaussian", "center": [0.2, 0.1, 0], "width": [1.1, 1.1, 0.3]},
            {"kind": "hermite", "order": [1, 0, 0], "center": [-0.2, 0.1, 0], "width": [1.1, 1.1, 0.3]},
        ],
        # Two and minus one (a, b) steps with c = 0: a node shift on every nested level.
        "z": [[28 / 41, -14 / 41, 0.0]],
    },
}

_PLANCHEREL = {
    "euclidean(1)": {
        "group": "euclidean(1)",
        "grid": {"axes": [{"lo": -6.0, "hi": 6.0, "count": 32}]},
        "test_functions": _FAMILY_1D,
        "levels": 3,
    },
    "affine": {
        "group": "affine",
        "grid": {"axes": [{"lattice": 17, "step": 0.2, "scale": "geometric"}, {"lo": -10.0, "hi": 10.0, "count": 80}]},
        "dual": {"s_min": 1e-9},
        "test_functions": _FAMILY_AFFINE,
        "levels": 3,
    },
    "bianchi(V)": {
        "group": "bianchi(V)",
        "grid": {"axes": [{"lo": -4.5, "hi": 4.5, "count": 15}, {"lo": -4.5, "hi": 4.5, "count": 15},
                          {"lattice": 12, "step": 0.25}]},
        "dual": {"lambda": {"count": 32}},
        "test_functions": _FAMILY_V,
        "levels": 3,
    },
    "affine_line": {
        "group": "affine_line",
        "grid": {"axes": [{"lattice": 12, "step": 0.25, "scale": "geometric"}, {"lo": -8.0, "hi": 8.0, "count": 32},
                          {"lo": -6.0, "hi": 6.0, "count": 16}]},
        "dual": {"s_min": 1e-9},
        "test_functions": _FAMILY_AFFINE_LINE,
        "levels": 3,
    },
}

_SEMI = {
    "affine": {
        "group": "affine",
        "grid": {"axes": [{"lattice": 17, "step": 0.2, "scale": "geometric"}, {"lo": -10.0, "hi": 10.0, "count": 80}]},
        "levels": 1,
    },
    "bianchi(V)": {
        "group": "bianchi(V)",
        "grid": {"axes": [{"lo": -4.4, "hi": 4.4, "count": 11}, {"lo": -4.4, "hi": 4.4, "count": 11},
                          {"lattice": 6, "step": 0.5}]},
        "dual": {"lambda": {"count": 32}},
        "levels": 1,
    },
    "bianchi(VII,1)": {
        "group": "bianchi(VII,1)",
        "grid": {"axes": [{"lo": -4.4, "hi": 4.4, "count": 11}, {"lo": -4.4, "hi": 4.4, "count": 11},
                          {"lattice": 6, "step": 0.5}]},
        "dual": {"lambda": {"count": 16}},
        "levels": 1,
    },
}

_PRODUCT = {
    "euclidean(2)": {
        "group": "euclidean(2)",
        "grid": {"axes": [{"lo": -4.0, "hi": 4.0, "count": 16}, {"lo": -4.0, "hi": 4.0, "count": 16}]},
        "tau": _TAUS,
        "levels": 1,
    },
    "affine_line": _PLANCHEREL["affine_line"],
}

_QUANT = {"euclidean(1)": _EUCLIDEAN_QUANT, "affine": _AFFINE_QUANT, "bianchi(V)": _V_QUANT}

PRESETS = {
    "calibrate": _PLANCHEREL,
    "check-plancherel": _PLANCHEREL,
    "check-semiinvariance": _SEMI,
    "check-duality": _QUANT,
    "check-roundtrip": _QUANT,
    "check-covariance": _QUANT,
    "check-abelian-oracle": {"euclidean(1)": _EUCLIDEAN_QUANT},
    "check-product": _PRODUCT,
    "op-apply": _QUANT,
    "wigner": _QUANT,
}

DEFAULT_GROUP = {
    "calibrate": "affine",
    "check-plancherel": "euclidean(1)",
    "check-semiinvariance": "affine",
    "check-duality": "euclidean(1)",
    "check-roundtrip": "euclidean(1)",
    "check-covariance": "euclidean(1)",
    "check-abelian-oracle": "euclidean(1)",
    "check-product": "euclidean(2)",
    "op-apply": "euclidean(1)",
    "wigner": "euclidean(1)",
}


class PresetError(KeyError):
    """Raised when no preset exists for a (check, group) pair."""


def preset(check: str, group=None) -> dict:
    """Default configuration mapping of ``check`` for ``group`` (a label or a spec)."""
    table = PRESETS.get(check)
    if table is None:
        raise PresetError(f"unknown check {check!r}")
    label = DEFAULT_GROUP[check] if group is None else G.parse_group(group).label
    if label not in table:
        raise PresetError(f"no preset of {check} for {label}; choose from {sorted(table)}")
    return copy.deepcopy(table[label])


def groups_for(check: str) -> list:
    """Groups with a preset for ``check``."""
    return sorted(PRESETS.get(check, {}))
