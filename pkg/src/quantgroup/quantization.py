"""Operator-valued quantization on a discrete group.

The quantization of a symbol ``A(x, xi)`` is the composition of three
factors: an inverse Plancherel transform in the dual variable, the
change of variables ``C`` that depends on an ordering map ``tau``, and the
map from kernels to integral operators. Every factor is implemented on its
own and the Wigner transform inverts them one at a time.

Kernels and symbols are stored on a subset of rows (and, for kernels, of
columns) of the group grid. Spike-supported symbols then stay cheap on
large grids: for the Kohn-Nirenberg map every factor is row-local, for the
right map ``C`` turns rows into columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import groups as G
from .dual import DualModel, RepMatrix
from .grids import GridError, GroupGrid, SampledFunction

TAU_NAMES = ("kohn_nirenberg", "right", "euclidean_weyl")
_ALIASES = {"kn": "kohn_nirenberg", "e": "kohn_nirenberg", "kohn-nirenberg": "kohn_nirenberg",
            "id": "right", "weyl": "euclidean_weyl", "euclidean-weyl": "euclidean_weyl"}
PAIR_CHUNK = 200_000


class QuantizationError(ValueError):
    """Raised for unsupported ordering maps or inconsistent operands."""


class UnsupportedOrderingError(QuantizationError):
    """Raised when a known ordering map is not available on the group."""


class UndefinedRatioError(ZeroDivisionError):
    """Raised when a relative residual is requested for zero-norm data."""


# -- ordering maps ------------------------------------------------------------


@dataclass(frozen=True)
class TauMap:
    """Ordering map ``tau: G -> G``.

    ``kohn_nirenberg`` is the constant map to the identity, ``right`` the
    identity map and ``euclidean_weyl`` the halving map of R^n.
    """

    name: str
    group: G.GroupSpec

    def __post_init__(self):
        if self.name not in TAU_NAMES:
            raise QuantizationError(f"unknown ordering map {self.name!r}; choose from {TAU_NAMES}")
        if self.name == "euclidean_weyl" and self.group.kind != "euclidean":
            raise UnsupportedOrderingError("euclidean_weyl is only defined on euclidean groups")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.name == "kohn_nirenberg":
            return np.broadcast_to(G.identity(self.group), x.shape).copy()
        if self.name == "right":
            return x.copy()
        return 0.5 * x


def tau_map(name, group: G.GroupSpec) -> TauMap:
    if isinstance(name, TauMap):
        if name.group != group:
            raise QuantizationError("ordering map belongs to another group")
        return name
    key = str(name).lower()
    return TauMap(_ALIASES.get(key, key), group)


# -- kernels and operators ------------------------------------------------------


def _positions(indices, size):
    pos = np.full(size, -1, dtype=np.int64)
    if indices is None:
        pos[:] = np.arange(size)
    else:
        pos[indices] = np.arange(len(indices))
    return pos


class KernelMatrix:
    """Integral kernel sampled on (a block of) grid node pairs.

    ``(Upsilon(K) u)(x_i) = sum_j K_ij u(x_j) m_j``. Entries outside the
    stored block of ``rows`` x ``cols`` are zero; ``None`` means all nodes.
    """

    def __init__(self, grid: GroupGrid, values, rows=None, cols=None):
        self.grid = grid
        self.rows = None if rows is None else np.asarray(rows, dtype=np.int64)
        self.cols = None if cols is None else np.asarray(cols, dtype=np.int64)
        nr = grid.size if rows is None else len(self.rows)
        nc = grid.size if cols is None else len(self.cols)
        self.values = np.asarray(values, dtype=complex).reshape(nr, nc)
        if not np.all(np.isfinite(self.values)):
            raise QuantizationError("kernel entries must be finite")

    @classmethod
    def rank_one(cls, v: SampledFunction, u: SampledFunction) -> "KernelMatrix":
        """Kernel ``v(x) conj(u(y))`` of the operator ``phi -> <phi, u> v``."""
        v.grid.check_same(u.grid)
        return cls(v.grid, np.outer(v.values, np.conj(u.values)))

    @property
    def row_index(self) -> np.ndarray:
        return np.arange(self.grid.size) if self.rows is None else self.rows

    @property
    def col_index(self) -> np.ndarray:
        return np.arange(self.grid.size) if self.cols is None else self.cols

    def dense(self) -> np.ndarray:
        out = np.zeros((self.grid.size, self.grid.size), dtype=complex)
        out[np.ix_(self.row_index, self.col_index)] = self.values
        return out

    def _weights(self):
        m = self.grid.weights
        return m[self.row_index], m[self.col_index]

    def hs_norm(self) -> float:
        mr, mc = self._weights()
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * mr[:, None] * mc[None, :])))

    def inner(self, other: "KernelMatrix") -> complex:
        """``sum_ij m_i m_j K_ij conj(L_ij)``."""
        self.grid.check_same(other.grid)
        a, b = _common_blocks(self, other)
        mr, mc = a._weights()
        return complex(np.sum(a.values * np.conj(b.values) * mr[:, None] * mc[None, :]))

    def __sub__(self, other: "KernelMatrix") -> "KernelMatrix":
        self.grid.check_same(other.grid)
        a, b = _common_blocks(self, other)
        return KernelMatrix(self.grid, a.values - b.values, a.rows, a.cols)

    def __add__(self, other: "KernelMatrix") -> "KernelMatrix":
        self.grid.check_same(other.grid)
        a, b = _common_blocks(self, other)
        return KernelMatrix(self.grid, a.values + b.values, a.rows, a.cols)

    def __mul__(self, scalar) -> "KernelMatrix":
        return KernelMatrix(self.grid, self.values * scalar, self.rows, self.cols)

    __rmul__ = __mul__

    def restrict(self, rows=None, cols=None) -> "KernelMatrix":
        """Same kernel stored on the block ``rows`` x ``cols`` (entries outside are dropped)."""
        rows_new = None if rows is None else np.asarray(rows, dtype=np.int64)
        cols_new = None if cols is None else np.asarray(cols, dtype=np.int64)
        n = self.grid.size
        rpos = _positions(self.rows, n)[np.arange(n) if rows_new is None else rows_new]
        cpos = _positions(self.cols, n)[np.arange(n) if cols_new is None else cols_new]
        vals = np.zeros((rpos.size, cpos.size), dtype=complex)
        ri, ci = np.nonzero(rpos >= 0)[0], np.nonzero(cpos >= 0)[0]
        vals[np.ix_(ri, ci)] = self.values[np.ix_(rpos[ri], cpos[ci])]
        return KernelMatrix(self.grid, vals, rows_new, cols_new)


def _union(a, b):
    if a is None or b is None:
        return None
    return np.union1d(a, b)


def _common_blocks(a: KernelMatrix, b: KernelMatrix):
    same_rows = (a.rows is None and b.rows is None) or (
        a.rows is not None and b.rows is not None and np.array_equal(a.rows, b.rows))
    same_cols = (a.cols is None and b.cols is None) or (
        a.cols is not None and b.cols is not None and np.array_equal(a.cols, b.cols))
    if same_rows and same_cols:
        return a, b
    rows, cols = _union(a.rows, b.rows), _union(a.cols, b.cols)
    return a.restrict(rows, cols), b.restrict(rows, cols)


class IntegralOperator:
    """Operator on sampled functions defined by a :class:`KernelMatrix`."""

    def __init__(self, kernel: KernelMatrix):
        self.kernel = kernel
        self.grid = kernel.grid

    def __call__(self, u) -> SampledFunction:
        if isinstance(u, SampledFunction):
            self.grid.check_same(u.grid)
            u = u.values
        u = np.asarray(u, dtype=complex)
        K = self.kernel
        cols = K.col_index
        out = np.zeros(self.grid.size, dtype=complex)
        out[K.row_index] = K.values @ (self.grid.weights[cols] * u[cols])
        return SampledFunction(self.grid, out)

    def matrix(self) -> np.ndarray:
        """Dense matrix acting on sample vectors."""
        return self.kernel.dense() * self.grid.weights[None, :]

    def hs_norm(self) -> float:
        return self.kernel.hs_norm()


def upsilon(K: KernelMatrix) -> IntegralOperator:
    """Integral operator with kernel ``K``."""
    return IntegralOperator(K)


def upsilon_inv(T, grid: GroupGrid | None = None) -> KernelMatrix:
    """Kernel of an operator given as an :class:`IntegralOperator` or a sample-space matrix."""
    if isinstance(T, IntegralOperator):
        return T.kernel
    if grid is None:
        raise QuantizationError("a matrix operator needs its grid")
    T = np.asarray(T, dtype=complex)
    if T.shape != (grid.size, grid.size):
        raise GridError("operator matrix does not match the grid")
    return KernelMatrix(grid, T / grid.weights[None, :])


# -- kernel evaluation off the grid ------------------------------------------------


def _kernel_at(K: KernelMatrix, P, Q) -> np.ndarray:
    """Interpolated kernel values ``K(P_k, Q_k)`` for chart point arrays of equal length."""
    grid = K.grid
    n = grid.size
    rpos = _positions(K.rows, n)
    cpos = _positions(K.cols, n)
    out = np.zeros(P.shape[0], dtype=complex)
    for s in range(0, P.shape[0], PAIR_CHUNK):
        ip, wp = grid.interpolation(grid.wrap(P[s : s + PAIR_CHUNK]))
        rp = rpos[ip]
        wp = np.where(rp >= 0, wp, 0.0)
        # Pairs whose first argument misses the stored rows stay zero.
        live = np.flatnonzero(np.any(wp != 0, axis=1))
        if live.size == 0:
            continue
        iq, wq = grid.interpolation(grid.wrap(Q[s : s + PAIR_CHUNK][live]))
        cq = cpos[iq]
        wq = np.where(cq >= 0, wq, 0.0)
        keep = np.any(wq != 0, axis=1)
        live, rp, wp, cq, wq = live[keep], rp[live][keep], wp[live][keep], cq[keep], wq[keep]
        cq = np.maximum(cq, 0)
        acc = np.zeros(live.size, dtype=complex)
        for a in range(rp.shape[1]):
            wa = wp[:, a]
            sel = np.flatnonzero(wa != 0)
            if sel.size == 0:
                continue
            vals = K.values[rp[sel, a][:, None], cq[sel]]
            acc[sel] += wa[sel] * np.einsum("pj,pj->p", vals, wq[sel])
        out[s + live] = acc
    return out


def _pairs(grid: GroupGrid, rows, cols):
    X = grid.nodes[rows]
    Y = grid.nodes[cols]
    Xb = np.repeat(X, len(cols), axis=0)
    Yb = np.tile(Y, (len(rows), 1))
    return Xb, Yb


def _kernel_on_block(K: KernelMatrix, P_rows, Q_cols) -> np.ndarray:
    """``K(P_i, Q_j)`` on the tensor product of two point lists, by sparse interpolation."""
    grid = K.grid
    SP = grid.interp_matrix(grid.wrap(P_rows))[:, K.row_index]
    SQ = grid.interp_matrix(grid.wrap(Q_cols))[:, K.col_index]
    return np.asarray((SQ @ (SP @ K.values).T).T)


def _support(K: KernelMatrix, tau: TauMap, inverse: bool):
    """Output block of the change of variables, propagated from the input block."""
    if tau.name == "kohn_nirenberg":
        return K.rows, None
    if tau.name == "right":
        if inverse:
            return K.cols, None
        if K.cols is None:
            return None, K.rows
    return None, None


def _weyl_differences(grid: GroupGrid):
    """Step offsets of node differences and the partner table of the halving map.

    Differences ``x_i - x_j`` are represented by the grid node in the box,
    ``Q_q = (k_q + c) h`` with ``c = lo / h``. Returns ``d`` of shape (N, n)
    with the signed step offsets ``k_q + c`` and ``partner`` of shape (N, N)
    with the flat index of ``(i - d_q) mod shape``, the column whose
    difference with row ``i`` is ``Q_q``.
    """
    shape = grid.shape
    origin = []
    for ax in grid.axes:
        c = ax.lo / ax.step
        if not ax.periodic or abs(c - round(c)) > 1e-9:
            return None
        origin.append(int(round(c)))
    k = np.stack(np.unravel_index(np.arange(grid.size), shape), axis=-1)
    d = k + np.array(origin)
    j = np.mod(k[:, None, :] - d[None, :, :], np.array(shape))
    partner = np.ravel_multi_index(tuple(np.moveaxis(j, -1, 0)), shape)
    return d, partner


def _half_shift(values: np.ndarray, shifts: np.ndarray, shape) -> np.ndarray:
    """Column ``q`` of ``values`` (shape (N, m)) sampled at ``i + shifts[q]`` by trigonometric interpolation.

    Uses the phase ``exp(2 pi i k s / n)`` with ``k`` in ``[-n/2, n/2)``, so
    shifts by ``s`` and ``-s`` are exact inverses.
    """
    dim = len(shape)
    arr = np.fft.fftn(values.reshape(tuple(shape) + (-1,)), axes=tuple(range(dim)))
    for ax, n in enumerate(shape):
        k = np.fft.fftfreq(n) * n
        phase = np.exp(2j * np.pi * np.outer(k, shifts[:, ax]) / n)
        bshape = [1] * (dim + 1)
        bshape[ax] = n
        bshape[-1] = shifts.shape[0]
        arr = arr * phase.reshape(bshape)
    return np.fft.ifftn(arr, axes=tuple(range(dim))).reshape(values.shape)


def _weyl_change(K: KernelMatrix, inverse: bool):
    """Halving-map change of variables on a periodic grid, diagonal by diagonal.

    ``[C K](x_i, x_j) = K(x_i - Q/2, Q)`` with ``Q`` the box representative
    of ``x_i - x_j``. Each diagonal is a trigonometric half shift of a column
    of ``K``, so the map is unitary and its inverse is exact. Returns None
    when the grid box does not start on the step lattice.
    """
    grid = K.grid
    table = _weyl_differences(grid)
    if table is None:
        return None
    d, partner = table
    rows = np.arange(grid.size)[:, None]
    if not inverse:
        shifted = _half_shift(K.dense(), -0.5 * d, grid.shape)
        out = np.zeros((grid.size, grid.size), dtype=complex)
        out[rows, partner] = shifted
        return KernelMatrix(grid, out)
    diagonals = K.dense()[rows, partner]
    return KernelMatrix(grid, _half_shift(diagonals, 0.5 * d, grid.shape))


def c_tau(K: KernelMatrix, tau) -> KernelMatrix:
    """Change of variables ``[C K](x, y) = Delta(y)^(-1/2) K(tau(y x^-1) x, x y^-1)``."""
    g = K.grid.group
    tau = tau_map(tau, g)
    if tau.name == "euclidean_weyl":
        out = _weyl_change(K, inverse=False)
        if out is not None:
            return out
    rows, cols = _support(K, tau, inverse=False)
    rows_i = np.arange(K.grid.size) if rows is None else rows
    cols_i = np.arange(K.grid.size) if cols is None else cols
    X, Y = _pairs(K.grid, rows_i, cols_i)
    Yinv = np.tile(G.inverse(g, K.grid.nodes[cols_i]), (len(rows_i), 1))
    Q = G.multiply(g, X, Yinv)
    P = X if tau.name == "kohn_nirenberg" else G.multiply(g, tau(G.inverse(g, Q)), X)
    vals = _kernel_at(K, P, Q) * G.modular(g, Y) ** -0.5
    return KernelMatrix(K.grid, vals, rows, cols)


def c_tau_inv(L: KernelMatrix, tau) -> KernelMatrix:
    """Inverse change of variables.

    ``[C^-1 L](x, y) = Delta(y')^(1/2) L(x', y')`` with
    ``x' = tau(y^-1)^-1 x`` and ``y' = y^-1 x'``.
    """
    g = L.grid.group
    tau = tau_map(tau, g)
    if tau.name == "euclidean_weyl":
        out = _weyl_change(L, inverse=True)
        if out is not None:
            return out
    rows, cols = _support(L, tau, inverse=True)
    rows_i = np.arange(L.grid.size) if rows is None else rows
    cols_i = np.arange(L.grid.size) if cols is None else cols
    X, Y = _pairs(L.grid, rows_i, cols_i)
    yinv = G.inverse(g, Y)
    P = G.multiply(g, G.inverse(g, tau(yinv)), X)
    Q = G.multiply(g, yinv, P)
    vals = _kernel_at(L, P, Q) * G.modular(g, Q) ** 0.5
    return KernelMatrix(L.grid, vals, rows, cols)


# -- symbols -------------------------------------------------------------------------


class SymbolField:
    """Operator-valued symbol on (a subset of) grid rows times the dual grid.

    Parameters
    ----------
    model : DualModel
    values : ndarray, shape (R, n_dual, M, M)
        Kernel matrices ``A(x_r, xi)`` in the representation-space convention.
    rows : array of int, optional
        Grid nodes carrying the stored rows; ``None`` means all nodes.
    """

    def __init__(self, model: DualModel, values, rows=None):
        self.model = model
        self.rows = None if rows is None else np.asarray(rows, dtype=np.int64)
        nr = model.grid.size if rows is None else len(self.rows)
        self.values = np.asarray(values, dtype=complex).reshape(nr, model.n_dual, model.M, model.M)

    @classmethod
    def zeros(cls, model: DualModel, rows=None) -> "SymbolField":
        nr = model.grid.size if rows is None else len(rows)
        return cls(model, np.zeros((nr, model.n_dual, model.M, model.M), dtype=complex), rows)

    @property
    def grid(self) -> GroupGrid:
        return self.model.grid

    @property
    def row_index(self) -> np.ndarray:
        return np.arange(self.grid.size) if self.rows is None else self.rows

    def at(self, node: int, xi) -> RepMatrix:
        pos = _positions(self.rows, self.grid.size)[node]
        k = self.model.point_index(xi)
        if pos < 0:
            return RepMatrix(np.zeros((self.model.M, self.model.M), complex), self.model.w[k].copy())
        return RepMatrix(self.values[pos, k], self.model.w[k].copy())

    def _check(self, other: "SymbolField"):
        self.grid.check_same(other.grid)
        if self.model.n_dual != other.model.n_dual or self.model.M != other.model.M:
            raise QuantizationError("symbols live on different dual grids")

    def restrict(self, rows) -> "SymbolField":
        rows = None if rows is None else np.asarray(rows, dtype=np.int64)
        target = np.arange(self.grid.size) if rows is None else rows
        pos = _positions(self.rows, self.grid.size)[target]
        vals = np.zeros((target.size,) + self.values.shape[1:], dtype=complex)
        keep = pos >= 0
        vals[keep] = self.values[pos[keep]]
        return SymbolField(self.model, vals, rows)

    def _aligned(self, other: "SymbolField"):
        self._check(other)
        if (self.rows is None and other.rows is None) or (
                self.rows is not None and other.rows is not None and np.array_equal(self.rows, other.rows)):
            return self, other
        rows = _union(self.rows, other.rows)
        return self.restrict(rows), other.restrict(rows)

    def inner(self, other: "SymbolField") -> complex:
        """``sum_x m_x sum_xi nu_xi <A(x, xi), B(x, xi)>_HS``."""
        a, b = self._aligned(other)
        m = self.grid.weights[a.row_index]
        w = self.model.w
        val = np.einsum("rxij,rxij,xi,xj,x,r->", a.values, np.conj(b.values), w, w,
                        self.model.dual.weights, m)
        return complex(val)

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def __sub__(self, other):
        a, b = self._aligned(other)
        return SymbolField(self.model, a.values - b.values, a.rows)

    def __add__(self, other):
        a, b = self._aligned(other)
        return SymbolField(self.model, a.values + b.values, a.rows)

    def __mul__(self, scalar):
        return SymbolField(self.model, self.values * scalar, self.rows)

    __rmul__ = __mul__


def _check_model(A: SymbolField, model: DualModel | None = None):
    if model is not None and model is not A.model:
        A.grid.check_same(model.grid)


def symbol_to_kernel_factor(A: SymbolField) -> KernelMatrix:
    """``(id x P)^-1``: inverse Plancherel transform of every stored row."""
    vals = A.model.plancherel_inverse(A.values)
    return KernelMatrix(A.grid, vals, A.rows, None)


def kernel_to_symbol_factor(L: KernelMatrix, model: DualModel) -> SymbolField:
    """``(id x P)``: Plancherel transform of every stored row in the second variable."""
    L.grid.check_same(model.grid)
    full = L.restrict(L.rows, None)
    return SymbolField(model, model.plancherel_forward(full.values), full.rows)


def kernel_of_symbol(A: SymbolField, tau) -> KernelMatrix:
    """Kernel of the quantization of ``A`` through the factorization."""
    return c_tau(symbol_to_kernel_factor(A), tau)


def kernel_of_symbol_direct(A: SymbolField, tau) -> KernelMatrix:
    """Kernel by direct quadrature of the dual sum.

    ``ker(x, y) = Delta(y)^(-1/2) sum_xi nu_xi Tr(A(tau(y x^-1) x, xi) D^(1/2) pi_xi(y x^-1))``
    """
    model = A.model
    grid = A.grid
    g = grid.group
    tau = tau_map(tau, g)
    nodes = grid.nodes
    if tau.name == "kohn_nirenberg":
        rows = A.row_index
        vals = np.zeros((len(rows), grid.size), dtype=complex)
        for r, x in enumerate(rows):
            z = G.multiply(g, nodes, G.inverse(g, nodes[x]))
            vals[r] = model.contract(A.values[r], z, kind="direct")
        vals *= G.modular(g, nodes)[None, :] ** -0.5
        return KernelMatrix(grid, vals, A.rows, None)
    if tau.name == "right":
        cols = A.row_index
        vals = np.zeros((grid.size, len(cols)), dtype=complex)
        for c, y in enumerate(cols):
            z = G.multiply(g, nodes[y], G.inverse(g, nodes))
            vals[:, c] = model.contract(A.values[c], z, kind="direct") * G.modular(g, nodes[y]) ** -0.5
        return KernelMatrix(grid, vals, None, A.rows)
    # Halving map on R^n (one-dimensional representations): interpolate the
    # symbol at midpoints x - Q/2, with Q the box representative of x - y.
    full = A.restrict(None).values[:, :, 0, 0]
    nu = model.dual.weights
    vals = np.zeros((grid.size, grid.size), dtype=complex)
    for i in range(grid.size):
        q = grid.wrap(nodes[i] - nodes)
        Amid = grid.interpolate(full.T, grid.wrap(nodes[i] - tau(q))).T
        chars = np.exp(-1j * q @ model.freq[:, 0, :].T)
        vals[i] = np.sum(Amid * chars * nu[None, :], axis=1)
    return KernelMatrix(grid, vals)


def op_tau(A: SymbolField, tau, path: str = "factor") -> IntegralOperator:
    """Quantization ``Op^tau(A)`` by the factorization or by direct quadrature."""
    if path == "factor":
        return upsilon(kernel_of_symbol(A, tau))
    if path == "direct":
        return upsilon(kernel_of_symbol_direct(A, tau))
    raise QuantizationError(f"unknown evaluation path {path!r}")


def wig_tau(T, tau, model: DualModel) -> SymbolField:
    """Wigner transform: the factor-by-factor inverse of :func:`op_tau`."""
    K = upsilon_inv(T, model.grid)
    return kernel_to_symbol_factor(c_tau_inv(K, tau), model)


def sch(K: KernelMatrix, v: SampledFunction, tau) -> SampledFunction:
    """Schroedinger-type representation ``Sch(K) v = Upsilon(C K) v``."""
    return upsilon(c_tau(K, tau))(v)


# -- rank-one symbols ----------------------------------------------------------------


def wig_rank_one(u: SampledFunction, v: SampledFunction, tau, model: DualModel, rows=None) -> SymbolField:
    """Symbol of the rank-one operator ``phi -> <phi, u> v`` by direct quadrature.

    With this convention ``<Op(A) u, v> = <A, wig_rank_one(u, v)>``.

    Kohn-Nirenberg: ``W(x) = v(x) pi(x) pi(Delta^(-1/2) u)^* D^(1/2)``.
    Right: ``W(x) = Delta(x)^(-1/2) conj(u(x)) pi(v) pi(x)^* D^(1/2)``.
    Euclidean halving map: ``W(x, xi) = sum_Q v(x + Q/2) conj(u(x - Q/2)) pi_xi(Q) dQ``
    over box representatives ``Q``; on grids whose box starts on the step
    lattice the product is formed on the node diagonal and half-shifted by
    trigonometric interpolation, which makes the duality exact.
    """
    grid = model.grid
    grid.check_same(u.grid)
    grid.check_same(v.grid)
    g = grid.group
    tau = tau_map(tau, g)
    rows_i = np.arange(grid.size) if rows is None else np.asarray(rows, dtype=np.int64)
    nodes = grid.nodes
    M = model.M
    w = model.w
    sqd = np.sqrt(model.d)
    out = np.zeros((rows_i.size, model.n_dual, M, M), dtype=complex)
    if tau.name == "euclidean_weyl":
        table = _weyl_differences(grid)
        if table is not None:
            # Diagonal products v(x_i) conj(u(x_i - Q)), half-shifted back to the midpoints.
            d, partner = table
            prod = v.values[:, None] * np.conj(u.values[partner])
            half = _half_shift(prod, 0.5 * d, grid.shape)
            out[:] = model.forward(half[rows_i], duflo=True)
            return SymbolField(model, out, rows)
        for r, i in enumerate(rows_i):
            x = nodes[i]
            vv = grid.interpolate(v.values, grid.wrap(x + 0.5 * nodes))
            uu = grid.interpolate(u.values, grid.wrap(x - 0.5 * nodes))
            out[r] = model.forward(vv * np.conj(uu), duflo=True)
        return SymbolField(model, out, rows)
    if tau.name == "kohn_nirenberg":
        B = model.forward(u.values * G.modular(g, nodes) ** -0.5, duflo=False)
        Bstar = np.conj(np.swapaxes(B, -1, -2))
        for r, i in enumerate(rows_i):
            for k in range(model.n_dual):
                Px = model.rep_apply(k, nodes[i]).values
                out[r, k] = v.values[i] * (Px * w[k][None, :]) @ Bstar[k] * sqd[k][None, :]
    else:
        B = model.forward(v.values, duflo=False)
        for r, i in enumerate(rows_i):
            scale = G.modular(g, nodes[i]) ** -0.5 * np.conj(u.values[i])
            for k in range(model.n_dual):
                Px = model.rep_apply(k, nodes[i]).values
                out[r, k] = scale * (B[k] * w[k][None, :]) @ Px.conj().T * sqd[k][None, :]
    if not model.active.all():
        out *= model.window_mask()[None]
    return SymbolField(model, out, rows)


def fwig(u: SampledFunction, v: SampledFunction, tau, model: DualModel, cols=None) -> np.ndarray:
    """Fourier-Wigner transform: Plancherel transform of ``C^-1(v x conj u)`` in the first variable.

    Returns an array of shape (n_cols, n_dual, M, M) over (group column, dual point).
    """
    K = KernelMatrix.rank_one(v, u)
    L = c_tau_inv(K, tau)
    cols_i = np.arange(model.grid.size) if cols is None else np.asarray(cols, dtype=np.int64)
    full = L.restrict(None, cols_i)
    return model.plancherel_forward(full.values.T)


def symbol_fourier(A: SymbolField, cols=None) -> np.ndarray:
    """``(P x P^-1) A``: Plancherel transform in x of the inverse transform in xi."""
    L = symbol_to_kernel_factor(A)
    cols_i = np.arange(A.grid.size) if cols is None else np.asarray(cols, dtype=np.int64)
    full = L.restrict(None, cols_i)
    return A.model.plancherel_forward(full.values.T)


def duality_residual(A: SymbolField, u: SampledFunction, v: SampledFunction, tau,
                     path: str = "factor") -> float:
    """``|<Op(A) u, v> - <A, Wig_{u,v}>| / (|A| |u| |v|)``."""
    from .grids import inner, norm

    na, nu, nv = A.norm(), norm(u), norm(v)
    if na == 0 or nu == 0 or nv == 0:
        raise UndefinedRatioError("duality residual of zero-norm data")
    lhs = inner(op_tau(A, tau, path)(u), v)
    W = wig_rank_one(u, v, tau, A.model, rows=A.rows)
    rhs = A.inner(W)
    return abs(lhs - rhs) / (na * nu * nv)
