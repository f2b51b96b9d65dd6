"""Builtin test functions.

All builtins are tensor products of one-dimensional profiles in the uniform
coordinate of each grid axis (``log a`` on the affine a-axis, the chart
coordinate elsewhere). A builtin is described by a mapping such as::

    {"kind": "gaussian", "center": [1.0, 0.0], "width": [0.5, 0.5]}

``center`` is given in chart coordinates. Optional ``freq`` adds a plane-wave
modulation ``exp(2 pi i freq . u)`` which leaves the L2 norm unchanged.
Reference squared norms are continuous Haar integrals, computed per axis
with adaptive quadrature.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import hermite as npherm
from scipy.integrate import quad

from .grids import GridError, GroupGrid, SampledFunction

KINDS = ("gaussian", "bump", "hermite", "spike")


class TestFunctionError(ValueError):
    """Raised for an unknown or malformed builtin description."""

    __test__ = False


def _per_axis(value, dim, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(dim, float(arr[0]))
    if arr.size != dim:
        raise TestFunctionError(f"{name} needs {dim} entries")
    return arr


def _profile(kind, order, r):
    """One-dimensional profile as a function of the scaled offset ``r``."""
    if kind == "gaussian":
        return np.exp(-0.5 * r**2)
    if kind == "hermite":
        coef = np.zeros(int(order) + 1)
        coef[-1] = 1.0
        return npherm.hermval(r, coef) * np.exp(-0.5 * r**2)
    inside = np.abs(r) < 1.0
    safe = np.where(inside, r, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)


def _parse(grid: GroupGrid, spec: dict):
    spec = dict(spec)
    kind = spec.get("kind")
    if kind not in KINDS:
        raise TestFunctionError(f"unknown builtin {kind!r}; choose from {KINDS}")
    d = grid.group.chart_dim
    center = _per_axis(spec.get("center", [1.0 if ax.scale == "geometric" else 0.0 for ax in grid.axes]),
                       d, "center")
    ucenter = np.array([ax.to_uniform(c) for ax, c in zip(grid.axes, center)], dtype=float)
    width = _per_axis(spec.get("width", 1.0), d, "width")
    if np.any(width <= 0):
        raise TestFunctionError("widths must be positive")
    order = _per_axis(spec.get("order", 0), d, "order").astype(int)
    freq = _per_axis(spec.get("freq", 0.0), d, "freq")
    return kind, ucenter, width, order, freq, complex(spec.get("scale", 1.0))


def sample(grid: GroupGrid, spec: dict) -> SampledFunction:
    """Samples of a builtin test function on ``grid``."""
    kind, c, w, order, freq, scale = _parse(grid, spec)
    if kind == "spike":
        j = grid.nearest_node([ax.from_uniform(x) for ax, x in zip(grid.axes, c)])
        values = np.zeros(grid.size, dtype=complex)
        values[j] = scale / grid.weights[j]
        return SampledFunction(grid, values)
    u = np.stack([ax.to_uniform(grid.nodes[:, k]) for k, ax in enumerate(grid.axes)], axis=-1)
    values = np.ones(grid.size, dtype=complex) * scale
    for k in range(len(grid.axes)):
        r = (u[:, k] - c[k]) / w[k]
        values *= _profile(kind, order[k], r) * np.exp(2j * np.pi * freq[k] * u[:, k])
    return SampledFunction(grid, values)


def _axis_density(grid: GroupGrid, k: int):
    """Haar density of axis ``k`` as a function of its uniform coordinate."""
    ax = grid.axes[k]
    kind, p = grid.group.axis_density(k)
    if kind == "power":
        # x = exp(u) on geometric axes: x**p dx = exp((p + 1) u) du
        return lambda u: np.exp((p + 1.0) * u)
    if kind == "exp":
        return lambda u: np.exp(p * u)
    return lambda u: 1.0


def reference_norm2(grid: GroupGrid, spec: dict) -> float:
    """Continuous squared L2 norm of a builtin over the whole group.

    Spikes have no continuous counterpart; their discrete norm is returned.
    """
    kind, c, w, order, _, scale = _parse(grid, spec)
    if kind == "spike":
        return float(np.sum(grid.weights * np.abs(sample(grid, spec).values) ** 2))
    total = abs(scale) ** 2
    for k in range(len(grid.axes)):
        dens = _axis_density(grid, k)
        reach = 1.0 if kind == "bump" else 12.0
        val, _ = quad(lambda u: _profile(kind, order[k], (u - c[k]) / w[k]) ** 2 * dens(u),
                      c[k] - reach * w[k], c[k] + reach * w[k], epsabs=0.0, epsrel=1e-12, limit=200)
        total *= val
    return float(total)


def gaussian_norm2_closed_form(grid: GroupGrid, spec: dict) -> float:
    """Closed-form squared norm of a builtin gaussian (used to cross-check the quadrature)."""
    kind, c, w, _, _, scale = _parse(grid, spec)
    if kind != "gaussian":
        raise TestFunctionError("closed form only for gaussians")
    total = abs(scale) ** 2
    for k in range(len(grid.axes)):
        dk, p = grid.group.axis_density(k)
        rate = {"power": p + 1.0, "exp": p, "one": 0.0}[dk]
        # int exp(-(u-c)^2/w^2) exp(rate u) du
        total *= np.sqrt(np.pi) * w[k] * np.exp(rate * c[k] + rate**2 * w[k] ** 2 / 4.0)
    return float(total)


def sample_family(grid: GroupGrid, specs) -> np.ndarray:
    """Stack the samples of several builtins, shape (R, N)."""
    if not specs:
        raise GridError("empty test-function family")
    return np.stack([sample(grid, s).values for s in specs])
