"""Regular representations and covariance of the quantization.

Left translation ``(Left_z u)(x) = u(z^-1 x)`` and right translation
``(Right_z u)(x) = Delta(z)^(1/2) u(x z)`` act on sampled functions by
interpolation; on shift-exact ``z`` they permute nodes. The covariance
relation ``Left_z Op(A) Left_z^* = Op((Left_z x ad_pi(z)) A)`` is checked
end to end and factor by factor.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from . import groups as G
from .dual import DualModel
from .grids import GroupGrid, SampledFunction
from .quantization import (KernelMatrix, SymbolField, UndefinedRatioError, _kernel_on_block,
                           c_tau, kernel_of_symbol, kernel_of_symbol_direct, tau_map, upsilon,
                           wig_tau)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        raise UndefinedRatioError("relative defect of zero-norm data")
    return num / den


# -- point maps --------------------------------------------------------------


def _left_map(g: G.GroupSpec, z):
    zinv = G.inverse(g, z)
    return lambda x: G.multiply(g, zinv, x)


def _conj_map(g: G.GroupSpec, z):
    zinv = G.inverse(g, z)
    return lambda x: G.multiply(g, G.multiply(g, zinv, x), z)


def pullback_matrix(grid: GroupGrid, point_map, rows=None) -> sparse.csr_matrix:
    """Sparse matrix ``S`` with ``(S u)(x) = u(point_map(x))`` by interpolation.

    Only the output nodes in ``rows`` are built (all nodes by default).
    """
    rows_i = np.arange(grid.size) if rows is None else np.asarray(rows, dtype=np.int64)
    return grid.interp_matrix(grid.wrap(point_map(grid.nodes[rows_i])))


def _preimage(grid: GroupGrid, point_map, support):
    """Nodes whose image under ``point_map`` interpolates from ``support`` (``None`` = all)."""
    if support is None:
        return None
    S = pullback_matrix(grid, point_map)[:, support]
    return np.flatnonzero(S.getnnz(axis=1) > 0)


# -- regular representations ---------------------------------------------------


def left_translate(z, u: SampledFunction) -> SampledFunction:
    """``(Left_z u)(x) = u(z^-1 x)``."""
    g = u.grid.group
    S = pullback_matrix(u.grid, _left_map(g, z))
    return SampledFunction(u.grid, S @ u.values)


def right_translate(z, u: SampledFunction) -> SampledFunction:
    """``(Right_z u)(x) = Delta(z)^(1/2) u(x z)``."""
    g = u.grid.group
    S = pullback_matrix(u.grid, lambda x: G.multiply(g, x, z))
    return SampledFunction(u.grid, float(G.modular(g, z)) ** 0.5 * (S @ u.values))


def conjugate_translate(z, u: SampledFunction) -> SampledFunction:
    """``(Left_z Right_z u)(x) = Delta(z)^(1/2) u(z^-1 x z)``."""
    g = u.grid.group
    S = pullback_matrix(u.grid, _conj_map(g, z))
    return SampledFunction(u.grid, float(G.modular(g, z)) ** 0.5 * (S @ u.values))


def ad_pi(z, F, model: DualModel | None = None):
    """Dual-pointwise conjugation ``pi_xi(z) F(xi) pi_xi(z)^*``.

    ``F`` is a :class:`SymbolField` or an array of shape ``(..., n_dual, M, M)``
    (then ``model`` is required).
    """
    if isinstance(F, SymbolField):
        return SymbolField(F.model, F.model.ad(z, F.values), F.rows)
    if model is None:
        raise ValueError("a dual field array needs its model")
    return model.ad(z, F)


def translate_symbol(A: SymbolField, z, rows=None) -> SymbolField:
    """``((Left_z x ad_pi(z)) A)(x, xi) = pi_xi(z) A(z^-1 x, xi) pi_xi(z)^*``."""
    grid = A.grid
    fmap = _left_map(grid.group, z)
    if rows is None:
        rows = _preimage(grid, fmap, A.rows)
    S = pullback_matrix(grid, fmap, rows)[:, A.row_index]
    flat = A.values.reshape(A.values.shape[0], -1)
    moved = (S @ flat).reshape((S.shape[0],) + A.values.shape[1:])
    return SymbolField(A.model, A.model.ad(z, moved), rows)


def translate_kernel(K: KernelMatrix, z, second: str = "left") -> KernelMatrix:
    """Pull a kernel back along translations.

    ``second="left"`` gives ``K(z^-1 x, z^-1 y)`` (conjugation of the
    operator by ``Left_z``); ``second="conjugate"`` gives
    ``Delta(z)^(1/2) K(z^-1 x, z^-1 y z)``, the action of
    ``Left_z x Left_z Right_z``.
    """
    grid = K.grid
    g = grid.group
    fx = _left_map(g, z)
    fy = fx if second == "left" else _conj_map(g, z)
    rows = _preimage(grid, fx, K.rows)
    cols = _preimage(grid, fy, K.cols)
    rows_i = np.arange(grid.size) if rows is None else rows
    cols_i = np.arange(grid.size) if cols is None else cols
    vals = _kernel_on_block(K, fx(grid.nodes[rows_i]), fy(grid.nodes[cols_i]))
    if second != "left":
        vals = vals * float(G.modular(g, z)) ** 0.5
    return KernelMatrix(grid, vals, rows, cols)


# -- defects ---------------------------------------------------------------------


def _kernel_path(A: SymbolField, tau, path: str) -> KernelMatrix:
    return kernel_of_symbol(A, tau) if path == "factor" else kernel_of_symbol_direct(A, tau)


def covariance_defect(A: SymbolField, z, tau, path: str = "factor") -> float:
    """``|Left_z Op(A) Left_z^* - Op((Left_z x ad_pi(z)) A)|_HS / |Op(A)|_HS``."""
    tau = tau_map(tau, A.grid.group)
    K = _kernel_path(A, tau, path)
    lhs = translate_kernel(K, z)
    rhs = _kernel_path(translate_symbol(A, z), tau, path)
    return _ratio((lhs - rhs).hs_norm(), K.hs_norm())


def _rank_one_block(u: SampledFunction, v: SampledFunction, tau, rows):
    """Rank-one kernel ``v x conj(u)`` restricted so that its Wigner transform lives on ``rows``."""
    u.grid.check_same(v.grid)
    if rows is None or tau.name == "euclidean_weyl":
        return KernelMatrix.rank_one(v, u)
    rows = np.asarray(rows, dtype=np.int64)
    if tau.name == "kohn_nirenberg":
        return KernelMatrix(u.grid, np.outer(v.values[rows], np.conj(u.values)), rows, None)
    return KernelMatrix(u.grid, np.outer(v.values, np.conj(u.values[rows])), None, rows)


def wigner_rows(u: SampledFunction, v: SampledFunction, tau, model: DualModel, rows=None) -> SymbolField:
    """Wigner transform of the rank-one operator ``phi -> <phi, u> v`` on selected rows."""
    tau = tau_map(tau, model.group)
    W = wig_tau(upsilon(_rank_one_block(u, v, tau, rows)), tau, model)
    return W if rows is None else W.restrict(rows)


def wigner_covariance_defect(u: SampledFunction, v: SampledFunction, z, tau, model: DualModel,
                             rows=None) -> float:
    """``|Wig(Left_z u, Left_z v) - (Left_z x ad_pi(z)) Wig(u, v)| / |Wig(u, v)|``.

    ``rows`` restricts the comparison to a set of group nodes; the
    translated side is evaluated from the rows its interpolation needs.
    """
    grid = model.grid
    tau = tau_map(tau, grid.group)
    lhs = wigner_rows(left_translate(z, u), left_translate(z, v), tau, model, rows)
    if rows is None:
        base = wigner_rows(u, v, tau, model)
        rhs = translate_symbol(base, z, None)
        ref = base.norm()
    else:
        S = pullback_matrix(grid, _left_map(grid.group, z), rows)
        need = np.unique(S.indices)
        base = wigner_rows(u, v, tau, model, need)
        rhs = translate_symbol(base, z, rows)
        ref = wigner_rows(u, v, tau, model, rows).norm()
    return _ratio((lhs - rhs).norm(), ref)


def kernel_translation_defect(K: KernelMatrix, z, probes) -> float:
    """``ad_{Left_z} Upsilon(K)`` against ``Upsilon((Left_z x Left_z) K)`` on probe functions.

    The left side composes translations with the operator, the right side
    interpolates the kernel. Returns the largest
    ``|(lhs - rhs) phi| / (|K|_HS |phi|)`` over the probes.
    """
    from .grids import norm

    grid = K.grid
    g = grid.group
    op = upsilon(K)
    moved = upsilon(translate_kernel(K, z))
    ref = K.hs_norm()
    worst = 0.0
    for phi in probes:
        lhs = left_translate(z, op(left_translate(G.inverse(g, z), phi)))
        worst = max(worst, _ratio(norm(lhs - moved(phi)), ref * norm(phi)))
    return worst


def change_of_variables_translation_defect(K: KernelMatrix, z, tau) -> float:
    """``(Left_z x Left_z) C K`` against ``C (Left_z x Left_z Right_z) K``."""
    tau = tau_map(tau, K.grid.group)
    lhs = translate_kernel(c_tau(K, tau), z)
    rhs = c_tau(translate_kernel(K, z, second="conjugate"), tau)
    return _ratio((lhs - rhs).hs_norm(), K.hs_norm())


def plancherel_translation_defect(w: SampledFunction, z, model: DualModel) -> float:
    """``P(Left_z Right_z w)`` against ``ad_pi(z) P(w)`` in the weighted field norm."""
    Fw = model.plancherel_forward(w.values)
    lhs = model.plancherel_forward(conjugate_translate(z, w).values)
    rhs = model.ad(z, Fw)
    if not model.active.all():
        rhs = rhs * model.window_mask()
    diff = lhs - rhs
    return _ratio(np.sqrt(abs(model.field_inner(diff, diff))), np.sqrt(abs(model.field_inner(Fw, Fw))))


__all__ = ["left_translate", "right_translate", "conjugate_translate", "ad_pi", "translate_symbol",
           "translate_kernel", "covariance_defect", "wigner_covariance_defect", "wigner_rows",
           "kernel_translation_defect", "change_of_variables_translation_defect", "plancherel_translation_defect",
           "pullback_matrix"]
