"""Discrete groups: tensor quadrature grids with left Haar weights.

A :class:`GroupGrid` is the discrete stand-in for a group. Nodes live in the
global chart, weights are left Haar quadrature weights, and functions on the
group are sampled at the nodes (:class:`SampledFunction`). Off-grid values
are obtained by interpolation in the uniform coordinate of each axis (the
logarithm for geometric axes), with zero extension outside the grid box.
Periodic axes wrap around instead and may use trigonometric interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import groups as G

SNAP = 1e-9


class GridError(ValueError):
    """Raised for invalid grid parameters or mismatched grids."""


@dataclass(frozen=True)
class Axis:
    """One coordinate of a tensor grid.

    Parameters
    ----------
    lo, hi : float
        Range of the axis in chart coordinates.
    count : int
        Number of cells (and nodes).
    scale : {"linear", "geometric"}
        Geometric axes are uniform in ``log x``.
    periodic : bool
        Periodic axes place nodes at ``lo + j*h`` and identify ``lo`` with
        ``hi``; the others place nodes at cell midpoints.
    """

    lo: float
    hi: float
    count: int
    scale: str = "linear"
    periodic: bool = False

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise GridError("axis count must be a positive integer")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise GridError(f"axis range [{self.lo}, {self.hi}] is empty")
        if self.scale not in ("linear", "geometric"):
            raise GridError(f"unknown axis scale {self.scale!r}")
        if self.scale == "geometric" and self.lo <= 0:
            raise GridError("geometric axes need a strictly positive range")
        if self.scale == "geometric" and self.periodic:
            raise GridError("geometric axes cannot be periodic")

    @property
    def step(self) -> float:
        """Spacing of the nodes in the uniform coordinate."""
        return (self.to_uniform(self.hi) - self.to_uniform(self.lo)) / self.count

    @property
    def period(self) -> float:
        return self.hi - self.lo

    def to_uniform(self, x):
        return np.log(x) if self.scale == "geometric" else np.asarray(x, dtype=float)

    def from_uniform(self, u):
        return np.exp(u) if self.scale == "geometric" else np.asarray(u, dtype=float)

    @property
    def uniform_nodes(self) -> np.ndarray:
        offset = 0.0 if self.periodic else 0.5
        return self.to_uniform(self.lo) + (np.arange(self.count) + offset) * self.step

    @property
    def nodes(self) -> np.ndarray:
        return self.from_uniform(self.uniform_nodes)

    def cell_edges(self):
        """Lower and upper cell edges in chart coordinates."""
        u = self.uniform_nodes
        return self.from_uniform(u - 0.5 * self.step), self.from_uniform(u + 0.5 * self.step)

    def weights(self, density=("one", 0.0)) -> np.ndarray:
        """Quadrature weights of the axis for one factor of the Haar density."""
        lo, hi = self.cell_edges()
        kind, k = density
        x = self.nodes
        if kind == "one":
            return hi - lo
        if kind == "power":
            if self.scale == "geometric":
                if k == -1.0:
                    return np.log(hi / lo)
                return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
            return x**k * (hi - lo)
        if kind == "exp":
            return np.exp(k * x) * (hi - lo)
        raise GridError(f"unknown density factor {kind!r}")

    def refined(self) -> "Axis":
        """Axis with the step halved.

        Periodic and even axes double the count on the same range. Odd
        non-periodic axes keep every coarse node (so coarse lattice shifts stay
        exact): ``2N - 1`` nodes between the same outermost nodes, which moves
        each end of the range inwards by a quarter of the coarse step.
        """
        if self.periodic or self.count % 2 == 0:
            return Axis(self.lo, self.hi, 2 * self.count, self.scale, self.periodic)
        if self.count == 1:
            return Axis(self.lo, self.hi, 3, self.scale, self.periodic)
        quarter = 0.25 * self.step
        lo = float(self.from_uniform(self.to_uniform(self.lo) + quarter))
        hi = float(self.from_uniform(self.to_uniform(self.hi) - quarter))
        return Axis(lo, hi, 2 * self.count - 1, self.scale, self.periodic)

    def locate(self, x) -> np.ndarray:
        """Fractional node index of chart values ``x``."""
        return (self.to_uniform(x) - self.uniform_nodes[0]) / self.step

    def as_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "count": self.count, "scale": self.scale,
                "periodic": self.periodic}


def lattice_axis(half_count: int, step: float, scale: str = "linear") -> Axis:
    """Symmetric axis with ``2*half_count + 1`` nodes on the lattice ``step * Z``.

    For geometric axes the lattice lives in ``log x`` and is centred at 1.
    """
    half = (half_count + 0.5) * step
    if scale == "geometric":
        return Axis(float(np.exp(-half)), float(np.exp(half)), 2 * half_count + 1, "geometric")
    return Axis(-half, half, 2 * half_count + 1, "linear")


def _cardinal(delta, count, period):
    """Trigonometric cardinal function of an equispaced periodic grid."""
    arg = np.pi * delta / period
    s = np.sin(arg)
    small = np.abs(s) < 1e-14
    s = np.where(small, 1.0, s)
    if count % 2:
        val = np.sin(count * arg) / (count * s)
    else:
        val = np.sin(count * arg) * np.cos(arg) / (count * s)
    return np.where(small, 1.0, val)


class GroupGrid:
    """Tensor grid of a group chart with left Haar quadrature weights.

    Parameters
    ----------
    group : GroupSpec
    axes : sequence of Axis
        One axis per chart coordinate; the flattened node order is row-major
        (the last axis varies fastest).
    spectral : bool, optional
        Use trigonometric interpolation on periodic axes. Defaults to True
        for euclidean groups.
    """

    def __init__(self, group: G.GroupSpec, axes, spectral: bool | None = None):
        axes = tuple(axes)
        if len(axes) != group.chart_dim:
            raise GridError(f"{group.label} needs {group.chart_dim} axes, got {len(axes)}")
        if group.kind in ("affine", "affine_line") and axes[0].scale != "geometric":
            raise GridError("the affine a-axis must be geometric")
        for k, ax in enumerate(axes):
            if ax.scale == "geometric" and not (group.kind in ("affine", "affine_line") and k == 0):
                raise GridError("only the affine a-axis may be geometric")
        self.group = group
        self.axes = axes
        self.spectral = (group.kind == "euclidean") if spectral is None else bool(spectral)
        self.shape = tuple(ax.count for ax in axes)
        self.size = int(np.prod(self.shape))
        mesh = np.meshgrid(*[ax.nodes for ax in axes], indexing="ij")
        self.nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*[ax.weights(group.axis_density(k)) for k, ax in enumerate(axes)],
                            indexing="ij")
        self.weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)

    # -- bookkeeping ------------------------------------------------------

    def __eq__(self, other):
        return (isinstance(other, GroupGrid) and self.group == other.group
                and self.axes == other.axes and self.spectral == other.spectral)

    def __hash__(self):
        return hash((self.group, self.axes, self.spectral))

    def __repr__(self):
        return f"GroupGrid({self.group.label}, shape={self.shape})"

    def refined(self) -> "GroupGrid":
        return GroupGrid(self.group, [ax.refined() for ax in self.axes], self.spectral)

    def check_same(self, other: "GroupGrid"):
        if self != other:
            raise GridError("operands live on different grids")

    def nearest_node(self, point) -> int:
        """Flat index of the node closest to ``point`` in uniform coordinates."""
        point = np.asarray(point, dtype=float)
        idx = []
        for ax, x in zip(self.axes, point):
            f = ax.locate(x)
            i = int(np.rint(f))
            idx.append(i % ax.count if ax.periodic else min(max(i, 0), ax.count - 1))
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def wrap(self, points) -> np.ndarray:
        """Reduce periodic coordinates of ``points`` into the grid range."""
        points = np.array(points, dtype=float, copy=True)
        for k, ax in enumerate(self.axes):
            if ax.periodic:
                points[..., k] = ax.lo + np.mod(points[..., k] - ax.lo, ax.period)
        return points

    # -- interpolation ----------------------------------------------------

    def _axis_weights(self, k: int, x: np.ndarray):
        ax = self.axes[k]
        n = ax.count
        if ax.scale == "geometric":
            good = x > 0
            f = np.where(good, ax.locate(np.where(good, x, 1.0)), -np.inf)
        else:
            f = ax.locate(x)
        r = np.rint(f)
        exact = np.abs(f - r) < SNAP
        if np.all(exact):
            # Every point sits on a node: one-point stencils.
            if ax.periodic:
                return np.mod(r, n).astype(np.int64)[..., None], np.ones(f.shape + (1,))
            inside = (r >= 0) & (r <= n - 1)
            idx = np.where(inside, r, 0).astype(np.int64)[..., None]
            return idx, inside.astype(float)[..., None]
        if ax.periodic and self.spectral:
            idx = np.broadcast_to(np.arange(n), f.shape + (n,)).copy()
            delta = (f[..., None] - np.arange(n)) * ax.step
            wts = _cardinal(delta, n, ax.period)
            onehot = (np.mod(r, n)[..., None] == np.arange(n)).astype(float)
            wts = np.where(exact[..., None], onehot, wts)
            return idx, wts
        if ax.periodic:
            i0 = np.floor(f)
            theta = np.where(exact, 0.0, f - i0)
            i0 = np.where(exact, r, i0)
            idx = np.stack([np.mod(i0, n), np.mod(i0 + 1, n)], axis=-1).astype(np.int64)
            wts = np.stack([1.0 - theta, theta], axis=-1)
            return idx, wts
        inside = (f >= -SNAP) & (f <= n - 1 + SNAP)
        if n == 1:
            idx = np.zeros(f.shape + (2,), dtype=np.int64)
            wts = np.stack([np.where(inside & exact, 1.0, 0.0), np.zeros(f.shape)], axis=-1)
            return idx, wts
        fc = np.clip(np.where(inside, f, 0.0), 0.0, n - 1)
        i0 = np.minimum(np.floor(fc), n - 2)
        theta = fc - i0
        theta = np.where(exact & inside, np.rint(theta), theta)
        idx = np.stack([i0, i0 + 1], axis=-1).astype(np.int64)
        wts = np.stack([1.0 - theta, theta], axis=-1) * inside[..., None]
        return idx, wts

    def interpolation(self, points):
        """Interpolation stencil of chart ``points`` of shape ``(P, d)``.

        Returns
        -------
        idx : ndarray of int, shape (P, k)
            Flat node indices.
        wts : ndarray of float, shape (P, k)
            Weights; rows sum to one inside the grid and vanish outside.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.group.chart_dim)
        idx = np.zeros((points.shape[0], 1), dtype=np.int64)
        wts = np.ones((points.shape[0], 1))
        stride = 1
        for k in reversed(range(len(self.axes))):
            ik, wk = self._axis_weights(k, points[:, k])
            idx = (idx[:, :, None] + stride * ik[:, None, :]).reshape(points.shape[0], -1)
            wts = (wts[:, :, None] * wk[:, None, :]).reshape(points.shape[0], -1)
            stride *= self.axes[k].count
        return idx, wts

    def interp_matrix(self, points) -> sparse.csr_matrix:
        """Sparse matrix mapping node values to values at ``points``."""
        idx, wts = self.interpolation(points)
        rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
        mat = sparse.csr_matrix((wts.ravel(), (rows, idx.ravel())), shape=(idx.shape[0], self.size))
        mat.eliminate_zeros()
        return mat

    def interpolate(self, values, points, chunk: int = 200_000) -> np.ndarray:
        """Evaluate node ``values`` (shape ``(..., N)``) at chart ``points``."""
        values = np.asarray(values)
        points = np.asarray(points, dtype=float).reshape(-1, self.group.chart_dim)
        out = np.empty(values.shape[:-1] + (points.shape[0],),
                       dtype=np.result_type(values.dtype, float))
        for s in range(0, points.shape[0], chunk):
            idx, wts = self.interpolation(points[s : s + chunk])
            out[..., s : s + chunk] = np.einsum("...pk,pk->...p", values[..., idx], wts)
        return out


def haar_grid(group: G.GroupSpec, axes, spectral: bool | None = None) -> GroupGrid:
    """Build a :class:`GroupGrid` from axes or axis dictionaries."""
    built = []
    for k, ax in enumerate(axes):
        if isinstance(ax, Axis):
            built.append(ax)
            continue
        ax = dict(ax)
        periodic = ax.pop("periodic", group.kind == "euclidean"
                          or (group.kind == "affine_line" and k == 2))
        built.append(Axis(float(ax["lo"]), float(ax["hi"]), int(ax["count"]),
                          ax.get("scale", "linear"), bool(periodic)))
    return GroupGrid(group, built, spectral)


@dataclass
class SampledFunction:
    """Complex samples of a function on the nodes of a :class:`GroupGrid`."""

    grid: GroupGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if self.values.shape[0] != self.grid.size:
            raise GridError(f"expected {self.grid.size} samples, got {self.values.shape[0]}")

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return SampledFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return SampledFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SampledFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def evaluate(self, points) -> np.ndarray:
        return self.grid.interpolate(self.values, points)


def integrate(f: SampledFunction) -> complex:
    """Haar quadrature of ``f``."""
    return complex(np.sum(f.grid.weights * f.values))


def inner(f: SampledFunction, g: SampledFunction) -> complex:
    """L2 inner product, linear in the first argument."""
    f.grid.check_same(g.grid)
    return complex(np.sum(f.grid.weights * f.values * np.conj(g.values)))


def norm(f: SampledFunction) -> float:
    return float(np.sqrt(max(inner(f, f).real, 0.0)))


def convolve(f: SampledFunction, g: SampledFunction, chunk_rows: int = 256) -> SampledFunction:
    """Quadrature of ``(f * g)(x) = int f(y) g(y^-1 x) dm(y)``."""
    f.grid.check_same(g.grid)
    grid = f.grid
    grp = grid.group
    inv_y = G.inverse(grp, grid.nodes)
    coef = grid.weights * f.values
    keep = np.nonzero(coef)[0]
    out = np.zeros(grid.size, dtype=complex)
    for s in range(0, grid.size, chunk_rows):
        x = grid.nodes[s : s + chunk_rows]
        pts = G.multiply(grp, inv_y[keep][None, :, :], x[:, None, :])
        vals = grid.interpolate(g.values, grid.wrap(pts.reshape(-1, grp.chart_dim)))
        out[s : s + chunk_rows] = vals.reshape(x.shape[0], -1) @ coef[keep]
    return SampledFunction(grid, out)


def involution_p(f: SampledFunction, p: float = 2.0) -> SampledFunction:
    """The p-involution ``x -> Delta(x)^(-1/p) conj(f(x^-1))``."""
    if p < 1:
        raise GridError("the involution exponent must satisfy p >= 1")
    grid = f.grid
    inv = grid.wrap(G.inverse(grid.group, grid.nodes))
    vals = np.conj(grid.interpolate(f.values, inv))
    return SampledFunction(grid, G.modular(grid.group, grid.nodes) ** (-1.0 / p) * vals)


def change_of_variables_integrals(grid: GroupGrid, func, x) -> np.ndarray:
    """The three Haar integrals related by the modular function.

    Returns quadratures of ``int f dm``, ``Delta(x) int f(y x) dm(y)`` and
    ``int Delta(y)^-1 f(y^-1) dm(y)`` for a callable ``func`` on chart points.
    """
    grp = grid.group
    y = grid.nodes
    m = grid.weights
    first = np.sum(m * func(y))
    second = G.modular(grp, np.asarray(x, float)) * np.sum(m * func(G.multiply(grp, y, x)))
    third = np.sum(m * func(G.inverse(grp, y)) / G.modular(grp, y))
    return np.array([first, second, third])
