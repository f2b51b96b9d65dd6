"""Discrete unitary duals: representations, Duflo-Moore operators, Plancherel.

Every representation used here has the same shape on a sampled
representation space with nodes ``t_i`` and quadrature weights ``w_i``::

    (pi_xi(x) phi)_i = amp(x) * exp(i freq[xi, i] . v(x)) * phi_{i - n(x)}

where ``n(x)`` is the index shift produced by the "shift coordinate" of
``x`` (log a for the affine groups, c for the Bianchi groups, nothing for
R^n) and ``v(x)`` collects the remaining "phase coordinates". Operators on a
representation space are stored as kernel matrices: ``(T phi)_i =
sum_j T_ij phi_j w_j``. Products, traces and Hilbert-Schmidt norms all carry
these weights (see :class:`RepMatrix`).

Grouping the group nodes by shift and by phase coordinates turns the
operator-valued Fourier transform and its inverse into dense matrix products
against tables of complex exponentials, which is where the time goes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

try:
    import finufft
except ImportError:  # the direct sums below are the fallback
    finufft = None

from . import groups as G
from .grids import Axis, GridError, GroupGrid

CHUNK = 4_000_000
NUFFT_EPS = 1e-13


class DualError(ValueError):
    """Raised for invalid dual parameters or unsupported dual operations."""


# -- representation-space linear algebra ---------------------------------


@dataclass
class RepMatrix:
    """Kernel matrix of an operator on a sampled representation space.

    Parameters
    ----------
    values : ndarray, shape (M, M)
        Kernel values ``T_ij``.
    weights : ndarray, shape (M,)
        Quadrature weights of the representation space.
    """

    values: np.ndarray
    weights: np.ndarray

    def __matmul__(self, other: "RepMatrix") -> "RepMatrix":
        return RepMatrix(self.values @ (self.weights[:, None] * other.values), self.weights)

    def __sub__(self, other: "RepMatrix") -> "RepMatrix":
        return RepMatrix(self.values - other.values, self.weights)

    def __mul__(self, scalar) -> "RepMatrix":
        return RepMatrix(self.values * scalar, self.weights)

    __rmul__ = __mul__

    def adjoint(self) -> "RepMatrix":
        return RepMatrix(self.values.conj().T, self.weights)

    def apply(self, phi) -> np.ndarray:
        return self.values @ (self.weights * np.asarray(phi))

    def trace(self) -> complex:
        return complex(np.sum(np.diag(self.values) * self.weights))

    def hs_norm(self) -> float:
        w = self.weights
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * w[:, None] * w[None, :])))

    def operator_norm(self) -> float:
        s = np.sqrt(self.weights)
        return float(np.linalg.norm(s[:, None] * self.values * s[None, :], 2))

    @classmethod
    def identity(cls, weights) -> "RepMatrix":
        weights = np.asarray(weights, dtype=float)
        return cls(np.diag(1.0 / weights).astype(complex), weights)


@dataclass
class DufloMoore:
    """Positive multiplication operator on a representation space."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(~(self.values > 0)):
            raise DualError("Duflo-Moore values must be strictly positive")

    def matrix(self) -> RepMatrix:
        return RepMatrix(np.diag(self.values / self.weights).astype(complex), self.weights)

    def sqrt(self) -> "DufloMoore":
        return DufloMoore(np.sqrt(self.values), self.weights)


@dataclass(frozen=True)
class DualPoint:
    """A point of a discrete dual: a layer label and continuous parameters."""

    layer: object
    param: tuple = ()


@dataclass
class DualGrid:
    """Layered dual points with Plancherel weights.

    ``raw_weights`` hold density times cell size; the effective weights are
    ``kappa[layer] * raw_weights``.
    """

    points: list
    raw_weights: np.ndarray
    layer_index: np.ndarray
    layers: tuple
    kappa: np.ndarray = field(default=None)

    def __post_init__(self):
        self.raw_weights = np.asarray(self.raw_weights, dtype=float)
        self.layer_index = np.asarray(self.layer_index, dtype=int)
        if self.kappa is None:
            self.kappa = np.ones(len(self.layers))
        self.kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (len(self.layers),)).copy()
        if len(self.points) == 0:
            raise DualError("dual grid has no points")
        if np.any(~(self.raw_weights > 0)):
            raise DualError("Plancherel weights must be strictly positive")
        if np.any(~(self.kappa > 0)):
            raise DualError("calibration constants must be strictly positive")
        if set(np.unique(self.layer_index)) != set(range(len(self.layers))):
            raise DualError("every layer needs at least one dual point")

    @property
    def weights(self) -> np.ndarray:
        return self.kappa[self.layer_index] * self.raw_weights

    def __len__(self):
        return len(self.points)

    def with_kappa(self, kappa) -> "DualGrid":
        return replace(self, kappa=np.broadcast_to(np.asarray(kappa, float), (len(self.layers),)).copy())


# -- phase tables ---------------------------------------------------------


class _PointTable:
    """Points grouped by integer shift and by distinct phase coordinates."""

    def __init__(self, model: "DualModel", points, allow_fraction: bool):
        points = np.asarray(points, dtype=float).reshape(-1, model.group.chart_dim)
        shift = model.shift_of(points)
        base = np.floor(shift + 1e-9)
        frac = shift - base
        frac[np.abs(frac) < 1e-9] = 0.0
        if not allow_fraction and np.any(frac != 0):
            raise DualError("points are not commensurate with the representation grid")
        self.size = points.shape[0]
        amp = model.amp_of(points)
        self.uv, inv = np.unique(model.phase_coords(points), axis=0, return_inverse=True)
        self.inv = inv.reshape(-1)
        # Each point contributes to band base (weight 1 - frac) and base + 1 (weight frac).
        contrib = [(base, 1.0 - frac)]
        if np.any(frac != 0):
            contrib.append((base + 1, frac))
        bands = {}
        for b, wt in contrib:
            sel = np.nonzero(wt != 0)[0]
            for n in np.unique(b[sel]):
                idx = sel[b[sel] == n]
                bands.setdefault(int(n), []).append((idx, wt[idx]))
        self.groups = []
        for n, parts in sorted(bands.items()):
            idx = np.concatenate([p[0] for p in parts])
            wt = np.concatenate([p[1] for p in parts])
            self.groups.append((n, idx, wt * amp[idx]))


def _nufft_points(freq, lattice):
    v0, h, shape = lattice
    eta = freq.reshape(-1, freq.shape[-1])
    half = np.array([n // 2 for n in shape], dtype=float)
    # exp(i eta.v) with v = v0 + h*(k + N//2): a global phase times exp(i (eta*h).k).
    offset = eta @ (v0 + h * half)
    x = np.mod(eta * h + np.pi, 2 * np.pi) - np.pi
    return x, offset


def _nufft_call(kind, x, data, sign, shape):
    dim = x.shape[1]
    coords = [np.ascontiguousarray(x[:, j]) for j in range(dim)]
    fn = getattr(finufft, f"nufft{dim}d{kind}")
    if kind == 2:
        return fn(*coords, np.ascontiguousarray(data), isign=sign, eps=NUFFT_EPS, nthreads=1)
    return fn(*coords, np.ascontiguousarray(data), shape, isign=sign, eps=NUFFT_EPS, nthreads=1)


def _nufft_sum(C, freq, lattice, sign):
    """``sum_v C[r, v] exp(sign i eta_f . v)`` for lattice nodes ``v``, shape (R, F)."""
    _, _, shape = lattice
    x, offset = _nufft_points(freq, lattice)
    coef = C.reshape((C.shape[0],) + shape)
    vals = _nufft_call(2, x, coef, sign, shape).reshape(C.shape[0], -1)
    return vals * np.exp(sign * 1j * offset)[None, :]


def _nufft_adjoint(Gf, freq, lattice, sign):
    """``sum_f G[r, f] exp(sign i eta_f . v)`` at the lattice nodes ``v``, shape (R, nu)."""
    _, _, shape = lattice
    x, offset = _nufft_points(freq, lattice)
    data = Gf * np.exp(sign * 1j * offset)[None, :]
    vals = _nufft_call(1, x, data, sign, shape)
    return vals.reshape(Gf.shape[0], -1)


def _scattered_pays(freq, targets) -> bool:
    """Whether a type-3 transform beats the dense exponential table."""
    if finufft is None or targets.shape[1] > 3:
        return False
    eta = freq.reshape(-1, freq.shape[-1])
    # Fine grid of the type-3 transform: about (2 / pi) X S points per axis
    # for source half-width X and target half-width S, times an upsampling of 2.
    X = np.abs(eta).max(axis=0)
    S = np.ptp(targets, axis=0) / 2
    fine = float(np.prod(np.maximum(4.0 * X * S / np.pi, 16.0)))
    return fine < min(0.1 * eta.shape[0] * targets.shape[0], 5e6)


def _nufft_scattered(Gf, freq, targets, sign):
    """``sum_f G[r, f] exp(sign i eta_f . v_p)`` at scattered points ``v_p``, shape (R, P)."""
    eta = freq.reshape(-1, freq.shape[-1])
    dim = eta.shape[1]
    plan = finufft.Plan(3, dim, n_trans=Gf.shape[0], eps=NUFFT_EPS, isign=sign, nthreads=1)
    src = [np.ascontiguousarray(eta[:, j]) for j in range(dim)]
    dst = [np.ascontiguousarray(targets[:, j]) for j in range(dim)]
    plan.setpts(*src, *([None] * (3 - dim)), *dst)
    out = plan.execute(np.ascontiguousarray(Gf, dtype=complex))
    return out.reshape(Gf.shape[0], targets.shape[0])


# -- the dual model --------------------------------------------------------


class DualModel:
    """Discrete dual of a group grid.

    Parameters
    ----------
    grid : GroupGrid
        The discrete group.
    dual : DualGrid
        Dual points and Plancherel weights.
    t, w, d : ndarray, shape (n_dual, M)
        Representation-space nodes, quadrature weights and Duflo-Moore
        values for each dual point.
    freq : ndarray, shape (n_dual, M, n_phase)
        Frequencies of the phase factors.
    step : float or None
        Shift-coordinate spacing of the representation grid.
    params : dict
        Construction parameters, kept for refinement and reports.
    active : ndarray of bool, shape (n_dual, M), optional
        Representation samples inside the resolvable window of each dual
        point. Transforms are projected onto the active samples.
    """

    def __init__(self, grid: GroupGrid, dual: DualGrid, t, w, d, freq, step, params=None,
                 active=None):
        self.grid = grid
        self.group = grid.group
        self.dual = dual
        self.t = np.asarray(t, dtype=float)
        self.w = np.asarray(w, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.freq = np.asarray(freq, dtype=float)
        self.step = step
        self.params = dict(params or {})
        n, m = self.w.shape
        self.active = np.ones((n, m), bool) if active is None else np.asarray(active, bool)
        if n != len(dual) or self.d.shape != (n, m) or self.freq.shape[:2] != (n, m):
            raise DualError("representation arrays do not match the dual grid")
        if np.any(~(self.w > 0)) or np.any(~(self.d > 0)):
            raise DualError("representation weights and Duflo-Moore values must be positive")
        self._node_table = None
        self._lattice_info = None
        self.backend = "auto"

    # -- structure --------------------------------------------------------

    @property
    def M(self) -> int:
        return self.w.shape[1]

    @property
    def n_dual(self) -> int:
        return self.w.shape[0]

    def with_dual(self, dual: DualGrid) -> "DualModel":
        other = DualModel(self.grid, dual, self.t, self.w, self.d, self.freq, self.step, self.params,
                          self.active)
        other._node_table = self._node_table
        other._lattice_info = self._lattice_info
        other.backend = self.backend
        return other

    def with_kappa(self, kappa) -> "DualModel":
        return self.with_dual(self.dual.with_kappa(kappa))

    def shift_of(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        axis = self.group.shift_axis
        if axis is None:
            return np.zeros(points.shape[:-1])
        x = points[..., axis]
        if self.group.kind in ("affine", "affine_line"):
            with np.errstate(divide="ignore", invalid="ignore"):
                x = np.log(x)
        return x / self.step

    def amp_of(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.group.kind in ("affine", "affine_line"):
            return np.sqrt(points[..., 0])
        return np.ones(points.shape[:-1])

    def phase_coords(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        kind = self.group.kind
        if kind == "euclidean":
            return points
        if kind == "affine":
            return points[..., 1:2]
        if kind == "affine_line":
            return points[..., 1:3]
        return points[..., 0:2]

    def _exp_table(self, v, xi_slice, conj=False) -> np.ndarray:
        f = self.freq[xi_slice].reshape(-1, self.freq.shape[-1])
        arg = v @ f.T
        return np.exp(-1j * arg) if conj else np.exp(1j * arg)

    def _xi_chunks(self, rows: int):
        per = max(1, int(CHUNK // max(1, rows * self.M)))
        for s in range(0, self.n_dual, per):
            yield slice(s, min(self.n_dual, s + per))

    def _lattice(self):
        """Uniform-lattice description of the node phase coordinates, if the fast path applies."""
        if self.backend == "direct" or finufft is None:
            return None
        if self._lattice_info is None:
            table = self.node_table()
            uv = table.uv
            dim = uv.shape[1]
            if dim > 3:
                self._lattice_info = False
                return None
            axes = [np.unique(uv[:, j]) for j in range(dim)]
            shape = tuple(a.size for a in axes)
            ok = int(np.prod(shape)) == uv.shape[0]
            h = np.array([a[1] - a[0] if a.size > 1 else 1.0 for a in axes])
            for a, hj in zip(axes, h):
                ok = ok and (a.size == 1 or np.allclose(np.diff(a), hj, rtol=1e-10, atol=0))
            self._lattice_info = (uv[0].copy(), h, shape) if ok else False
        return self._lattice_info or None

    def node_table(self) -> _PointTable:
        if self._node_table is None:
            self._node_table = _PointTable(self, self.grid.nodes, allow_fraction=False)
        return self._node_table

    # -- single representations -------------------------------------------

    def point_index(self, xi) -> int:
        if isinstance(xi, (int, np.integer)):
            if not 0 <= xi < self.n_dual:
                raise DualError("dual index out of range")
            return int(xi)
        try:
            return self.dual.points.index(xi)
        except ValueError as exc:
            raise DualError(f"{xi!r} is not a point of this dual grid") from exc

    def rep_apply(self, xi, x) -> RepMatrix:
        """Sampled representation ``pi_xi(x)`` (shifts off the lattice interpolate)."""
        k = self.point_index(xi)
        x = G.validate(self.group, x)
        n = float(self.shift_of(x))
        amp = float(self.amp_of(x))
        phase = np.exp(1j * self.freq[k] @ self.phase_coords(x))
        n0 = int(np.floor(n + 1e-9))
        theta = n - n0 if abs(n - n0) > 1e-9 else 0.0
        M = self.M
        T = np.zeros((M, M), dtype=complex)
        for band, wt in ((n0, 1.0 - theta), (n0 + 1, theta)):
            if wt == 0:
                continue
            i = np.arange(max(0, band), min(M, M + band))
            T[i, i - band] += wt * amp * phase[i] / self.w[k, i - band]
        return RepMatrix(T, self.w[k].copy())

    def duflo_moore(self, xi) -> DufloMoore:
        k = self.point_index(xi)
        return DufloMoore(self.d[k].copy(), self.w[k].copy())

    # -- Fourier and Plancherel transforms -----------------------------------

    def forward(self, values, duflo: bool = True) -> np.ndarray:
        """Fourier transform of sampled functions.

        Parameters
        ----------
        values : ndarray, shape (R, N) or (N,)
            Samples on the group grid.
        duflo : bool
            Multiply by ``D^(1/2)`` on the right (the Plancherel transform).

        Returns
        -------
        ndarray, shape (R, n_dual, M, M) or (n_dual, M, M)
        """
        values = np.asarray(values, dtype=complex)
        single = values.ndim == 1
        values = np.atleast_2d(values)
        if values.shape[1] != self.grid.size:
            raise GridError("function does not live on the model grid")
        R = values.shape[0]
        M = self.M
        coef = values * self.grid.weights[None, :]
        table = self.node_table()
        nu = table.uv.shape[0]
        C = np.zeros((R, len(table.groups), nu), dtype=complex)
        for k, (n, idx, amp) in enumerate(table.groups):
            q = sparse.csr_matrix((amp, (table.inv[idx], np.arange(idx.size))), shape=(nu, idx.size))
            C[:, k, :] = (q @ coef[:, idx].T).T
        out = np.zeros((R, self.n_dual, M, M), dtype=complex)
        fac = (np.sqrt(self.d) if duflo else np.ones_like(self.d)) / self.w

        def place(k, n, S, sl):
            i = np.arange(max(0, n), min(M, M + n))
            if i.size:
                out[:, sl, i, i - n] = S[:, :, i] * fac[sl][:, i - n][None]

        lattice = self._lattice()
        if lattice is not None:
            for k, (n, _, _) in enumerate(table.groups):
                S = _nufft_sum(C[:, k, :], self.freq, lattice, sign=1)
                place(k, n, S.reshape(R, self.n_dual, M), slice(None))
        else:
            C = C.reshape(-1, nu)
            for sl in self._xi_chunks(nu):
                E = self._exp_table(table.uv, sl)
                S = (C @ E).reshape(R, len(table.groups), -1, M)
                for k, (n, _, _) in enumerate(table.groups):
                    place(k, n, S[:, k], sl)
        if not self.active.all():
            out *= self.window_mask()
        return out[0] if single else out

    def window_mask(self) -> np.ndarray:
        """Product mask of active representation samples, shape (n_dual, M, M)."""
        a = self.active.astype(float)
        return a[:, :, None] * a[:, None, :]

    def fourier_op(self, w_values, xi=None):
        """Operator-valued Fourier transform ``pi_xi(w)`` (all dual points if ``xi`` is None)."""
        F = self.forward(w_values, duflo=False)
        if xi is None:
            return F
        k = self.point_index(xi)
        return RepMatrix(F[..., k, :, :], self.w[k].copy())

    def _bands(self, F, n, kind, nu, sl):
        M = self.M
        w, d = self.w[sl], self.d[sl]
        G_ = np.zeros(F.shape[:-1], dtype=complex)
        i = np.arange(max(0, n), min(M, M + n))
        if kind == "adjoint":
            G_[..., i] = F[..., i, i - n] * (w[:, i] * np.sqrt(d[:, i - n]))
        else:
            G_[..., i] = F[..., i - n, i] * (w[:, i] * np.sqrt(d[:, i]))
        return G_ * nu[:, None]

    def contract(self, F, points=None, kind: str = "adjoint") -> np.ndarray:
        """Dual sums of traces against the representation at ``points``.

        ``kind="adjoint"`` evaluates ``sum_xi nu_xi Tr(F_xi D^(1/2) pi_xi(x)^*)``
        (the Plancherel inversion sum) and ``kind="direct"`` evaluates
        ``sum_xi nu_xi Tr(F_xi D^(1/2) pi_xi(x))``.

        Parameters
        ----------
        F : ndarray, shape (R, n_dual, M, M) or (n_dual, M, M)
        points : ndarray, shape (P, d), optional
            Chart points; defaults to the grid nodes.
        """
        F = np.asarray(F)
        single = F.ndim == 3
        F = F.reshape((-1,) + F.shape[-3:])
        R = F.shape[0]
        if not self.active.all():
            F = F * self.window_mask()
        if points is None:
            table = self.node_table()
        else:
            table = _PointTable(self, points, allow_fraction=True)
        out = np.zeros((R, table.size), dtype=complex)
        conj = kind == "adjoint"
        nu = table.uv.shape[0]
        acc = np.zeros((len(table.groups), R, nu), dtype=complex)
        lattice = self._lattice() if points is None else None
        if lattice is not None:
            everything = slice(None)
            for k, (n, _, _) in enumerate(table.groups):
                Gn = self._bands(F, n, kind, self.dual.weights, everything)
                acc[k] = _nufft_adjoint(Gn.reshape(R, -1), self.freq, lattice, sign=-1 if conj else 1)
        elif self.backend != "direct" and _scattered_pays(self.freq, table.uv):
            everything = slice(None)
            Gall = np.stack([self._bands(F, n, kind, self.dual.weights, everything).reshape(R, -1)
                             for n, _, _ in table.groups])
            acc[:] = _nufft_scattered(Gall.reshape(-1, Gall.shape[-1]), self.freq, table.uv,
                                      -1 if conj else 1).reshape(acc.shape)
        else:
            for sl in self._xi_chunks(nu):
                E = self._exp_table(table.uv, sl, conj=conj)
                for k, (n, _, _) in enumerate(table.groups):
                    Gn = self._bands(F[:, sl], n, kind, self.dual.weights[sl], sl)
                    acc[k] += Gn.reshape(R, -1) @ E.T
        for k, (n, idx, amp) in enumerate(table.groups):
            np.add.at(out, (slice(None), idx), acc[k][:, table.inv[idx]] * amp[None, :])
        return out[0] if single else out

    def plancherel_forward(self, w_values) -> np.ndarray:
        return self.forward(w_values, duflo=True)

    def plancherel_inverse(self, F, points=None) -> np.ndarray:
        return self.contract(F, points, kind="adjoint")

    # -- norms and conjugation ------------------------------------------------

    def hs_norms2(self, F) -> np.ndarray:
        """Weighted Hilbert-Schmidt norms squared per dual point, shape ``F.shape[:-2]``."""
        w = self.w
        return np.einsum("...xij,xi,xj->...x", np.abs(F) ** 2, w, w)

    def field_inner(self, F, H) -> complex:
        """``sum_xi nu_xi <F_xi, H_xi>_HS`` for fields of shape (n_dual, M, M)."""
        w = self.w
        val = np.einsum("xij,xij,xi,xj,x->", F, np.conj(H), w, w, self.dual.weights)
        return complex(val)

    def ad(self, z, F) -> np.ndarray:
        """Conjugation ``pi_xi(z) F_xi pi_xi(z)^*`` applied dual-pointwise."""
        z = G.validate(self.group, z)
        F = np.asarray(F)
        n = float(self.shift_of(z))
        amp2 = float(self.amp_of(z)) ** 2
        phase = np.exp(1j * np.einsum("xmk,k->xm", self.freq, self.phase_coords(z)))
        M = self.M
        if abs(n - np.rint(n)) < 1e-9:
            n = int(np.rint(n))
            out = np.zeros_like(F)
            i = np.arange(max(0, n), min(M, M + n))
            out[..., i[:, None], i[None, :]] = F[..., (i - n)[:, None], (i - n)[None, :]]
            return amp2 * phase[:, :, None] * np.conj(phase)[:, None, :] * out
        out = np.empty_like(F)
        for k in range(self.n_dual):
            P = self.rep_apply(k, z).values
            w = self.w[k]
            left = (P * w[None, :]) @ F[..., k, :, :]
            out[..., k, :, :] = (left * w[None, :]) @ P.conj().T
        return out

    def describe(self) -> dict:
        return {"group": self.group.label, "n_dual": self.n_dual, "rep_dim": self.M,
                "layers": [str(l) for l in self.dual.layers],
                "kappa": [float(k) for k in self.dual.kappa], **self.params}


# -- builders ------------------------------------------------------------------


def _check_commensurate(grid: GroupGrid, step: float):
    axis = grid.group.shift_axis
    u = grid.axes[axis].uniform_nodes / step
    if np.max(np.abs(u - np.rint(u))) > 1e-7:
        raise GridError("shift axis nodes must lie on the lattice of the representation spacing "
                        "(use a symmetric axis with an odd count)")


def _euclidean_model(grid: GroupGrid, params: dict) -> DualModel:
    n = grid.group.n
    axes = params.get("axes")
    if axes is None:
        axes = []
        for ax in grid.axes:
            dxi = 1.0 / ax.period
            axes.append({"lo": -0.5 * ax.count * dxi, "hi": 0.5 * ax.count * dxi, "count": ax.count})
    if len(axes) != n:
        raise DualError(f"euclidean({n}) needs {n} dual axes")
    nodes, cells = [], []
    for ax in axes:
        count = int(ax["count"])
        if count < 1 or not float(ax["hi"]) > float(ax["lo"]):
            raise DualError("empty dual axis")
        h = (float(ax["hi"]) - float(ax["lo"])) / count
        nodes.append(float(ax["lo"]) + h * np.arange(count))
        cells.append(np.full(count, h))
    mesh = np.meshgrid(*nodes, indexing="ij")
    xi = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*cells, indexing="ij")
    raw = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    points = [DualPoint("R", tuple(p)) for p in xi]
    dual = DualGrid(points, raw, np.zeros(len(points), int), ("R",), params.get("kappa"))
    one = np.ones((len(points), 1))
    freq = (-2.0 * np.pi * xi)[:, None, :]
    return DualModel(grid, dual, np.zeros_like(one), one, one, freq, None,
                     {"axes": [dict(a) for a in axes]})


def _affine_model(grid: GroupGrid, params: dict) -> DualModel:
    step = grid.axes[0].step
    _check_commensurate(grid, step)
    hb = grid.axes[1].step
    s_max = float(params.get("s_max") or 0.5 / hb)
    s_min = float(params.get("s_min", 1e-6))
    if not 0 < s_min < s_max:
        raise DualError("need 0 < s_min < s_max for the affine representation grid")
    M = int(np.ceil(np.log(s_max / s_min) / step))
    t = np.log(s_max) - (np.arange(M) + 0.5) * step
    s = np.exp(t)
    points = [DualPoint("+"), DualPoint("-")]
    dual = DualGrid(points, np.ones(2), np.array([0, 1]), ("+", "-"), params.get("kappa"))
    w = np.tile(s * step, (2, 1))
    d = np.tile(s, (2, 1))
    freq = np.stack([2 * np.pi * s, -2 * np.pi * s])[:, :, None]
    return DualModel(grid, dual, np.tile(t, (2, 1)), w, d, freq, step,
                     {"s_min": s_min, "s_max": s_max})


def cross_section(g: G.GroupSpec, point: DualPoint) -> np.ndarray:
    """Point of the orbit cross-section labelled by a Bianchi dual point."""
    if g.kind != "bianchi":
        raise DualError("cross-sections are only defined for Bianchi groups")
    layer = point.layer
    lam = float(point.param[0])
    fam = g.family
    if fam == "V":
        if not 0.0 <= lam < 1.0:
            raise DualError("bianchi V parameters live in [0, 1)")
        return np.array([np.cos(2 * np.pi * lam), np.sin(2 * np.pi * lam)])
    if fam == "IV":
        if lam == 0.0 or (layer == "+") != (lam > 0):
            raise DualError("bianchi IV parameters are nonzero and match the layer sign")
        return np.array([np.sign(lam), lam])
    if fam == "VI":
        if lam <= 0 or layer not in (1, 2, 3, 4):
            raise DualError("bianchi VI parameters are positive with component index 1..4")
        sx, sy = {1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}[layer]
        if layer % 2:
            return np.array([sx * lam, float(sy)])
        return np.array([float(sx), sy * lam])
    p = float(g.param)
    lo, hi = (np.exp(-p * np.pi), 1.0) if layer == 1 else (1.0, np.exp(p * np.pi))
    if layer not in (1, 2) or not lo <= lam <= hi:
        raise DualError("bianchi VII parameters live in (exp(-p pi), 1] or [1, exp(p pi))")
    return np.array([lam, 0.0])


def _density(g: G.GroupSpec, layer, lam: np.ndarray) -> np.ndarray:
    fam = g.family
    if fam == "IV":
        return 1.0 + np.abs(lam)
    if fam == "V":
        return np.ones_like(lam)
    if fam == "VI":
        return np.full_like(lam, abs(float(g.param)) ** (layer % 2))
    return np.abs(lam)


def _lambda_cells(axis: dict, default_count: int):
    count = int(axis.get("count", default_count))
    ax = Axis(float(axis["lo"]), float(axis["hi"]), count, axis.get("scale", "linear"))
    lo, hi = ax.cell_edges()
    return ax.nodes, hi - lo


def bianchi_dual_grid(g: G.GroupSpec, params: dict) -> DualGrid:
    """Layered dual grid of a Bianchi group (before the representation window)."""
    spec = dict(params.get("lambda", {}))
    fam = g.family
    points, raw, layer_index = [], [], []
    if fam == "V":
        count = int(spec.get("count", 32))
        if count < 1:
            raise DualError("empty dual axis")
        layers = ("T",)
        for k in range(count):
            points.append(DualPoint("T", (k / count,)))
        raw = np.full(count, 1.0 / count)
        layer_index = np.zeros(count, int)
    else:
        if fam == "VII":
            p = float(g.param)
            layers = (1, 2)
            count = int(spec.get("count", 16))
            ranges = {1: (np.exp(-p * np.pi), 1.0), 2: (1.0, np.exp(p * np.pi))}
            axes = {l: {"lo": ranges[l][0], "hi": ranges[l][1], "count": count,
                        "scale": spec.get("scale", "geometric")} for l in layers}
        else:
            layers = ("-", "+") if fam == "IV" else (1, 2, 3, 4)
            base = {"lo": spec.get("lo", 0.05), "hi": spec.get("hi", 20.0),
                    "count": spec.get("count", 16), "scale": spec.get("scale", "geometric")}
            axes = {l: base for l in layers}
        raw, layer_index = [], []
        for li, layer in enumerate(layers):
            lam, cell = _lambda_cells(axes[layer], 16)
            if layer == "-":
                lam = -lam
            for v in lam:
                points.append(DualPoint(layer, (float(v),)))
            raw.append(_density(g, layer, lam) * cell)
            layer_index.append(np.full(lam.size, li))
        raw = np.concatenate(raw)
        layer_index = np.concatenate(layer_index)
    return DualGrid(points, raw, layer_index, layers, params.get("kappa"))


def _radius_window(g: G.GroupSpec, sigma, r_min, r_max):
    """Range of t on which ``|exp(-t M^T) sigma|`` stays between the bounds."""
    t = np.linspace(-80.0, 80.0, 64001)
    act = g.flow(-t)
    eta = np.einsum("tji,j->ti", act, sigma)
    r = np.linalg.norm(eta, axis=1)
    ok = r <= r_max
    if not np.any(ok):
        return None
    start = int(np.argmax(ok))
    stop = start
    while stop + 1 < t.size and r[stop + 1] <= r_max and r[stop] >= r_min:
        stop += 1
    return t[start], t[stop]


def _bianchi_model(grid: GroupGrid, params: dict) -> DualModel:
    g = grid.group
    step = grid.axes[2].step
    _check_commensurate(grid, step)
    dual = bianchi_dual_grid(g, params)
    r_max = float(params.get("r_max") or np.pi / max(grid.axes[0].step, grid.axes[1].step))
    r_min = float(params.get("r_min", 1e-3))
    if not 0 < r_min < r_max:
        raise DualError("need 0 < r_min < r_max for the Bianchi representation window")
    sig = np.array([cross_section(g, p) for p in dual.points])
    windows = [_radius_window(g, s, r_min, r_max) for s in sig]
    # Orbits that never enter the resolvable disc only carry aliased content on this grid.
    keep = np.array([w is not None for w in windows])
    if not np.all(keep):
        kept_layers = np.unique(dual.layer_index[keep])
        if kept_layers.size != len(dual.layers):
            raise DualError("a dual layer lies entirely above the grid's Nyquist band")
        dual = DualGrid([p for p, k in zip(dual.points, keep) if k], dual.raw_weights[keep],
                        dual.layer_index[keep], dual.layers, dual.kappa)
        sig = sig[keep]
    windows = np.array([w for w in windows if w is not None])
    M = int(np.ceil(np.max(windows[:, 1] - windows[:, 0]) / step))
    M = max(M, 1)
    t = windows[:, :1] + (np.arange(M)[None, :] + 0.5) * step
    act = g.flow(-t)
    freq = np.einsum("xmji,xj->xmi", act, sig)
    d = np.exp(-g.trace_generator() * t)
    w = np.full_like(t, step)
    active = t <= windows[:, 1:] + 0.5 * step
    return DualModel(grid, dual, t, w, d, freq, step,
                     {"r_min": r_min, "r_max": r_max, "lambda": dict(params.get("lambda", {}))},
                     active)


def product_dual(m1: DualModel, m2: DualModel) -> DualModel:
    """Dual of a direct product from the duals of its factors.

    Dual points are pairs, Plancherel weights and calibration constants
    multiply, Duflo-Moore operators and representations are tensor products.
    One factor must have one-dimensional representations.
    """
    g1, g2 = m1.group, m2.group
    if g1.kind == "euclidean" and g2.kind == "euclidean":
        group = G.euclidean(g1.n + g2.n)
    elif g1.kind == "affine" and g2.kind == "euclidean" and g2.n == 1:
        group = G.affine_line()
    else:
        raise DualError(f"unsupported product {g1.label} x {g2.label}")
    if m2.M != 1:
        raise DualError("the second factor must have one-dimensional representations")
    grid = GroupGrid(group, m1.grid.axes + m2.grid.axes, m1.grid.spectral or m2.grid.spectral)
    if g1.kind == "affine":
        grid = GroupGrid(group, m1.grid.axes + m2.grid.axes, spectral=False)
    n1, n2 = m1.n_dual, m2.n_dual
    i1 = np.repeat(np.arange(n1), n2)
    i2 = np.tile(np.arange(n2), n1)
    points = [DualPoint((m1.dual.points[a].layer, m2.dual.points[b].layer),
                        m1.dual.points[a].param + m2.dual.points[b].param) for a, b in zip(i1, i2)]
    l1, l2 = len(m1.dual.layers), len(m2.dual.layers)
    layers = tuple((a, b) for a in m1.dual.layers for b in m2.dual.layers)
    layer_index = m1.dual.layer_index[i1] * l2 + m2.dual.layer_index[i2]
    kappa = np.outer(m1.dual.kappa, m2.dual.kappa).ravel()
    raw = m1.dual.raw_weights[i1] * m2.dual.raw_weights[i2]
    dual = DualGrid(points, raw, layer_index, layers, kappa)
    M = m1.M
    f2 = np.broadcast_to(m2.freq[i2], (n1 * n2, M, m2.freq.shape[-1]))
    freq = np.concatenate([m1.freq[i1], f2], axis=-1)
    d = m1.d[i1] * m2.d[i2]
    w = m1.w[i1] * m2.w[i2]
    params = {"factors": [m1.params, m2.params]}
    return DualModel(grid, dual, m1.t[i1], w, d, freq, m1.step, params, m1.active[i1])


def dual_model(grid: GroupGrid, params: dict | None = None) -> DualModel:
    """Build the discrete dual of ``grid`` from dual parameters.

    Parameters
    ----------
    grid : GroupGrid
    params : dict, optional
        ``euclidean``: ``axes`` (one ``{lo, hi, count}`` per dimension;
        defaults to the lattice dual to the grid). ``affine``: ``s_min``,
        ``s_max``. ``affine_line``: the affine keys plus ``axes`` for the
        character variable. ``bianchi``: ``lambda`` (count and range),
        ``r_min``, ``r_max``. Any of them may carry ``kappa``.
    """
    params = dict(params or {})
    kind = grid.group.kind
    if kind == "euclidean":
        return _euclidean_model(grid, params)
    if kind == "affine":
        return _affine_model(grid, params)
    if kind == "bianchi":
        return _bianchi_model(grid, params)
    aff = _affine_model(GroupGrid(G.affine(), grid.axes[:2]),
                        {k: v for k, v in params.items() if k in ("s_min", "s_max")})
    line = _euclidean_model(GroupGrid(G.euclidean(1), grid.axes[2:]),
                            {"axes": params["axes"]} if "axes" in params else {})
    model = product_dual(aff, line)
    if "kappa" in params:
        model = model.with_kappa(params["kappa"])
    return model


def refine_dual_params(model: DualModel) -> dict:
    """Dual parameters for the next refinement level of ``model``."""
    params = {k: v for k, v in model.params.items() if k != "factors"}
    kind = model.group.kind
    if kind == "euclidean":
        axes = []
        for ax, gax in zip(params["axes"], model.grid.axes):
            h = (ax["hi"] - ax["lo"]) / ax["count"]
            if abs(h * gax.period - 1.0) < 1e-12:
                axes.append({"lo": 2 * ax["lo"], "hi": 2 * ax["hi"], "count": 2 * ax["count"]})
            else:
                axes.append({"lo": ax["lo"], "hi": ax["hi"], "count": 2 * ax["count"]})
        return {"axes": axes}
    if kind == "affine":
        return {"s_min": params["s_min"]}
    if kind == "affine_line":
        aff, line = model.params["factors"]
        sub = refine_dual_params(_euclidean_model(GroupGrid(G.euclidean(1), model.grid.axes[2:]), line))
        return {"s_min": aff["s_min"], "axes": sub["axes"]}
    lam = dict(params.get("lambda", {}))
    default = 32 if model.group.family == "V" else 16
    lam["count"] = 2 * int(lam.get("count", default))
    return {"lambda": lam, "r_min": params["r_min"]}


# -- calibration and Parseval ---------------------------------------------------


def layer_norms(model: DualModel, values) -> np.ndarray:
    """Uncalibrated Plancherel norms per function and layer, shape (R, n_layers)."""
    values = np.atleast_2d(values)
    out = np.zeros((values.shape[0], len(model.dual.layers)))
    per_point = model.hs_norms2(model.plancherel_forward(values)) * model.dual.raw_weights
    for s in range(values.shape[0]):
        out[s] = np.bincount(model.dual.layer_index, per_point[s], minlength=out.shape[1])
    return out


def calibrate(model: DualModel, values, references=None, per_layer: bool = False):
    """Least-squares calibration of the Plancherel constant(s).

    Parameters
    ----------
    model : DualModel
    values : ndarray, shape (R, N)
        At least three test functions sampled on the grid.
    references : array_like, optional
        Squared L2 norms to match; defaults to the grid quadrature norms.
    per_layer : bool
        Fit one constant per layer instead of a global one.

    Returns
    -------
    kappa : ndarray, shape (n_layers,)
    residuals : ndarray, shape (R,)
        Relative Parseval residuals after calibration.
    """
    values = np.atleast_2d(np.asarray(values, dtype=complex))
    if values.shape[0] < 3:
        raise DualError("calibration needs at least three test functions")
    if references is None:
        references = np.sum(model.grid.weights * np.abs(values) ** 2, axis=1)
    references = np.asarray(references, dtype=float)
    if np.any(references <= 0):
        raise DualError("calibration test functions must be nonzero")
    ratios = layer_norms(model, values) / references[:, None]
    if per_layer:
        kappa = np.linalg.lstsq(ratios, np.ones(ratios.shape[0]), rcond=None)[0]
    else:
        tot = ratios.sum(axis=1)
        kappa = np.full(ratios.shape[1], np.sum(tot) / np.sum(tot**2))
    if np.any(~(kappa > 0)):
        raise DualError("calibration produced a non-positive constant")
    residuals = np.abs(1.0 - ratios @ kappa)
    return kappa, residuals


def parseval_residuals(model: DualModel, values, references=None) -> np.ndarray:
    """Relative Parseval residuals with the model's current constants."""
    values = np.atleast_2d(values)
    if references is None:
        references = np.sum(model.grid.weights * np.abs(values) ** 2, axis=1)
    ratios = layer_norms(model, values) / np.asarray(references, dtype=float)[:, None]
    return np.abs(1.0 - ratios @ model.dual.kappa)


# -- cross-section validation -----------------------------------------------------


def _crosses(g: G.GroupSpec, eta):
    """Signed test functions whose zeros mark the cross-section components (IV, V, VII)."""
    fam = g.family
    x, y = eta[0], eta[1]
    if fam == "V":
        return [(np.hypot(x, y) - 1.0, np.ones(x.shape, bool))]
    if fam == "IV":
        return [(x - 1.0, y > 0), (x + 1.0, y < 0)]
    p = float(g.param)
    r = np.hypot(x, y)
    return [(y, (x > 0) & (r > np.exp(-p * np.pi)) & (r < np.exp(p * np.pi)))]


def orbit_crossings(g: G.GroupSpec, eta0, t_span: float = 25.0) -> int:
    """Number of times the orbit of ``eta0`` crosses the cross-section.

    The orbit ``t -> exp(-t M^T) eta0`` is integrated numerically and the
    crossings of each cross-section component are counted.
    """
    A = -g.generator().T
    half = np.linspace(0.0, t_span, 20_001)
    # Integrate both ways from eta0 at t = 0; the path runs from -t_span to t_span.
    back, fwd = (solve_ivp(lambda t, y: A @ y, (0.0, sign * t_span), eta0, t_eval=sign * half,
                           rtol=1e-10, atol=1e-12).y for sign in (-1.0, 1.0))
    path = np.concatenate([back[:, :0:-1], fwd], axis=1)
    r = np.hypot(path[0], path[1])
    keep = (r > 1e-8) & (r < 1e8)
    count = 0
    if g.family == "VI":
        # Alternate transversals per quadrant: odd quadrants use |y| = 1, even use |x| = 1.
        q = np.where(path[0] > 0, np.where(path[1] > 0, 1, 4), np.where(path[1] > 0, 2, 3))
        val = np.where(q % 2 == 1, np.abs(path[1]) - 1.0, np.abs(path[0]) - 1.0)
        s = np.sign(val)
        return int(np.sum((s[1:] != s[:-1]) & keep[1:] & keep[:-1]))
    for val, mask in _crosses(g, path):
        s = np.sign(val)
        hit = (s[1:] != s[:-1]) & mask[1:] & mask[:-1] & keep[1:] & keep[:-1]
        count += int(np.sum(hit))
    return count


def validate_cross_section(g: G.GroupSpec, n_orbits: int = 20, seed: int = 0) -> bool:
    """Check by flow integration that generic orbits cross the cross-section once."""
    rng = np.random.default_rng(seed)
    for _ in range(n_orbits):
        r = np.exp(rng.uniform(-1.0, 1.0))
        phi = rng.uniform(0, 2 * np.pi)
        eta0 = np.array([r * np.cos(phi), r * np.sin(phi)])
        if orbit_crossings(g, eta0) != 1:
            return False
    return True
