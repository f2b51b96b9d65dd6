"""Brute-force tau-quantization on R^n.

The oracle evaluates

    Op(a) u (x) = sum_y sum_xi exp(2 pi i (x - y) . xi) a(x + tau(y - x), xi) u(y) dy dxi

as a plain double sum over the grid nodes and the frequency nodes. It uses
the grid definitions (nodes and cell sizes) and nothing else from the
package: the symbol is interpolated at midpoints by its own FFT-based
trigonometric interpolation. On the periodic grid the midpoint of ``x`` and
``y`` is ``x - Q/2`` with ``Q`` the representative of ``x - y`` in the grid
box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import GroupGrid, SampledFunction

ORACLE_TAUS = ("kohn_nirenberg", "right", "euclidean_weyl")


class UnsupportedGroupError(ValueError):
    """Raised when the oracle is asked about a non-euclidean group."""


@dataclass
class ScalarSymbol:
    """Scalar symbol on an R^n grid.

    Parameters
    ----------
    grid : GroupGrid
        Euclidean grid with uniform periodic axes.
    xi : ndarray, shape (K, n)
        Frequency nodes.
    dxi : ndarray, shape (K,)
        Frequency cell volumes.
    values : ndarray, shape (N, K)
        ``a(x_j, xi_k)``.
    """

    grid: GroupGrid
    xi: np.ndarray
    dxi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.grid.group.kind != "euclidean":
            raise UnsupportedGroupError("the oracle only handles euclidean groups")
        self.xi = np.asarray(self.xi, dtype=float).reshape(-1, self.grid.group.n)
        self.dxi = np.broadcast_to(np.asarray(self.dxi, dtype=float), (self.xi.shape[0],)).copy()
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.size, self.xi.shape[0])


def _half_shift_table(values: np.ndarray, shape) -> dict:
    """Values on the grid shifted by half a step along any subset of axes.

    Returns a mapping from a tuple of 0/1 flags to the shifted array of
    shape ``shape + rest``. The Nyquist mode takes the phase of frequency
    ``-n/2``, which keeps the shift unitary.
    """
    dim = len(shape)
    base = values.reshape(tuple(shape) + values.shape[1:])
    table = {}
    for flags in np.ndindex(*(2,) * dim):
        arr = base
        for ax, flag in enumerate(flags):
            if not flag:
                continue
            n = shape[ax]
            k = np.fft.fftfreq(n) * n
            factor = np.exp(1j * np.pi * k / n)
            bshape = [1] * arr.ndim
            bshape[ax] = n
            arr = np.fft.ifft(np.fft.fft(arr, axis=ax) * factor.reshape(bshape), axis=ax)
        table[flags] = arr
    return table


def kn_oracle(a: ScalarSymbol, u, tau: str = "kohn_nirenberg") -> SampledFunction:
    """Apply the tau-quantization of ``a`` to ``u`` by direct double quadrature."""
    grid = a.grid
    if grid.group.kind != "euclidean":
        raise UnsupportedGroupError("the oracle only handles euclidean groups")
    if tau not in ORACLE_TAUS:
        raise ValueError(f"unknown ordering map {tau!r}")
    uv = np.asarray(u.values if isinstance(u, SampledFunction) else u, dtype=complex)
    shape = grid.shape
    dim = len(shape)
    steps = np.array([ax.step for ax in grid.axes])
    lo = np.array([ax.uniform_nodes[0] for ax in grid.axes])
    cell = float(np.prod(steps))
    idx = np.stack(np.unravel_index(np.arange(grid.size), shape), axis=-1)
    X = lo + idx * steps
    table = _half_shift_table(a.values, shape) if tau == "euclidean_weyl" else None
    out = np.empty(grid.size, dtype=complex)
    for i in range(grid.size):
        phase = np.exp(2j * np.pi * ((X[i] - X) @ a.xi.T)) * a.dxi[None, :]
        if tau == "kohn_nirenberg":
            sym = np.broadcast_to(a.values[i], phase.shape)
        elif tau == "right":
            sym = a.values
        else:
            period = steps * np.array(shape)
            rep = lo + np.mod(X[i] - X - lo, period)
            # Differences of nodes are whole steps, so ``rep / steps`` is an integer.
            twice = 2 * idx[i] - np.rint(rep / steps).astype(int)
            flags = np.mod(twice, 2)
            half = np.mod(twice // 2, np.array(shape))
            sym = np.empty_like(phase)
            for key, arr in table.items():
                sel = np.all(flags == np.array(key), axis=1)
                if np.any(sel):
                    sym[sel] = arr[tuple(half[sel].T)]
        out[i] = cell * np.sum(np.sum(phase * sym, axis=1) * uv)
    return SampledFunction(grid, out)


def symbol_from_field(A) -> ScalarSymbol:
    """Scalar symbol with the frequency nodes and values of a one-dimensional symbol field."""
    model = A.model
    xi = np.array([p.param for p in model.dual.points], dtype=float)
    full = A.restrict(None).values[:, :, 0, 0]
    return ScalarSymbol(model.grid, xi, model.dual.weights, full)


def pipeline_vs_oracle(A, u: SampledFunction, tau: str) -> float:
    """Largest relative L2 gap between both quantization paths and the oracle."""
    from .quantization import op_tau, tau_map
    from .grids import norm

    name = tau_map(tau, A.grid.group).name
    ref = kn_oracle(symbol_from_field(A), u, name)
    scale = norm(ref)
    if scale == 0:
        scale = 1.0
    gaps = [norm(op_tau(A, name, path)(u) - ref) / scale for path in ("factor", "direct")]
    return max(gaps)
