"""Verification campaigns.

Each check takes a :class:`~quantgroup.config.RunConfig`, runs over its
refinement levels and returns a :class:`~quantgroup.report.Report` with
one row per metric and level. Metrics that are exact on shift-exact grids
carry a round-off tolerance; the others carry a base tolerance and, from
the second level on, a decay-ratio row.
"""

from __future__ import annotations

import json

import numpy as np

from . import covariance as Cv
from . import dual as D
from . import groups as G
from . import oracle as O
from . import quantization as Q
from . import testfunctions as T
from .config import RunConfig
from .grids import GroupGrid, SampledFunction, inner, norm
from .report import Report

EXACT_TOL = 1e-10
ORACLE_TOL = 1e-8
CLOSED_FORM_TOL = 1e-6
BASE_TOL = 5e-2
DECAY_TOL = 0.7
KAPPA_STABILITY_TOL = 1e-2
DECAY_FLOOR = 1e-12


class UnsupportedCheckError(ValueError):
    """Raised when a check does not apply to the configured group."""


class PreconditionError(ValueError):
    """Raised when a configuration does not meet a check's preconditions."""


# -- shared helpers ----------------------------------------------------------------


def _shift_exact(group: G.GroupSpec) -> bool:
    return group.kind == "euclidean"


class _Recorder:
    """Adds rows with configured tolerances and decay ratios between levels."""

    def __init__(self, cfg: RunConfig, check: str, report: Report):
        self.cfg = cfg
        self.check = check
        self.report = report
        self.previous = {}

    def tol(self, metric: str, default):
        return self.cfg.tolerances.get(metric, default)

    def add(self, level: int, metric: str, value: float, tolerance, decay: bool = False):
        self.report.add(self.check, self.cfg.group.label, level, metric, value, self.tol(metric, tolerance))
        if decay:
            prev = self.previous.get(metric)
            if prev is not None and prev > DECAY_FLOOR:
                name = f"{metric}_decay"
                self.report.add(self.check, self.cfg.group.label, level, name, value / prev,
                                self.tol(name, DECAY_TOL))
            self.previous[metric] = value

    def info(self, level: int, metric: str, value: float):
        self.report.add(self.check, self.cfg.group.label, level, metric, value, None)


def levels(cfg: RunConfig, count: int | None = None):
    """Yield ``(level, grid, model)`` with grids and dual grids refined together."""
    grid = cfg.grid(0)
    params = dict(cfg.dual)
    for level in range(cfg.levels if count is None else count):
        model = D.dual_model(grid, params)
        yield level, grid, model
        params = D.refine_dual_params(model)
        if "kappa" in cfg.dual:
            params["kappa"] = cfg.dual["kappa"]
        grid = grid.refined()


_KAPPA_CACHE: dict = {}


def _cache_key(grid: GroupGrid, model: D.DualModel, specs, reference: str, per_layer: bool):
    params = json.dumps(model.params, sort_keys=True, default=str)
    return (grid, params, json.dumps(specs, sort_keys=True), reference, per_layer)


def calibrated(cfg: RunConfig, grid: GroupGrid, model: D.DualModel, reference: str = "discrete",
               per_layer: bool | None = None):
    """Model with calibrated Plancherel constants and the calibration residuals.

    ``reference="continuous"`` matches Haar integrals of the builtins,
    ``"discrete"`` matches their grid quadrature norms. Results are cached
    per grid, dual parameters and test family.
    """
    specs = cfg.test_functions
    if per_layer is None:
        per_layer = bool(cfg.options.get("per_layer", False))
    if "kappa" in cfg.dual:
        return model, np.zeros(len(specs))
    key = _cache_key(grid, model, specs, reference, per_layer)
    if key not in _KAPPA_CACHE:
        values = T.sample_family(grid, specs)
        refs = [T.reference_norm2(grid, s) for s in specs] if reference == "continuous" else None
        _KAPPA_CACHE[key] = D.calibrate(model, values, refs, per_layer=per_layer)
    kappa, residuals = _KAPPA_CACHE[key]
    return model.with_kappa(kappa), residuals


def _quantization_model(cfg: RunConfig, grid: GroupGrid, model: D.DualModel):
    """Euclidean duals keep their exact constant; the others are calibrated."""
    if grid.group.kind == "euclidean":
        return model
    return calibrated(cfg, grid, model, "discrete")[0]


def _bandlimited(rng, shape, fraction: float = 0.25) -> np.ndarray:
    """Random complex array whose discrete spectrum lives below ``fraction`` of each axis."""
    coef = np.zeros(shape, dtype=complex)
    masks = []
    for n in shape:
        k = np.fft.fftfreq(n) * n
        masks.append(np.abs(k) < max(1.0, fraction * n))
    mask = np.ones(shape, bool)
    for ax, m in enumerate(masks):
        bshape = [1] * len(shape)
        bshape[ax] = shape[ax]
        mask = mask & m.reshape(bshape)
    coef[mask] = rng.normal(size=mask.sum()) + 1j * rng.normal(size=mask.sum())
    out = np.fft.ifftn(coef)
    return out / np.sqrt(np.mean(np.abs(out) ** 2))


def random_function(grid: GroupGrid, rng, specs=None) -> SampledFunction:
    """Random test function.

    Euclidean grids get bandlimited noise; other grids get a random
    combination of the configured builtins.
    """
    if grid.group.kind == "euclidean" and not specs:
        return SampledFunction(grid, _bandlimited(rng, grid.shape).ravel())
    specs = specs or [{"kind": "gaussian"}]
    vals = np.zeros(grid.size, dtype=complex)
    for spec in specs:
        vals += (rng.normal() + 1j * rng.normal()) * T.sample(grid, spec).values
    return SampledFunction(grid, vals)


def _symbol_rows(cfg: RunConfig, grid: GroupGrid):
    pts = cfg.options.get("rows")
    if pts is None:
        return None
    return np.array(sorted({grid.nearest_node(p) for p in pts}), dtype=np.int64)


def random_symbol(cfg: RunConfig, model: D.DualModel, rng) -> Q.SymbolField:
    """Random symbol for quantization checks.

    Euclidean: ``sum_r c_r(x) h_r(xi)`` with bandlimited ``c_r`` and
    Gaussian windows ``h_r`` in the frequency. Other groups: symbols on the
    configured rows whose dual profiles are Plancherel transforms of the
    configured symbol builtins, mixed with random coefficients.
    """
    grid = model.grid
    if grid.group.kind == "euclidean":
        xi = np.array([p.param for p in model.dual.points], dtype=float)
        width = float(cfg.options.get("symbol_xi_width", 1.0))
        vals = np.zeros((grid.size, model.n_dual), dtype=complex)
        for _ in range(3):
            c = _bandlimited(rng, grid.shape).ravel()
            centre = rng.uniform(-1.0, 1.0, size=xi.shape[1])
            h = np.exp(-0.5 * np.sum((xi - centre) ** 2, axis=1) / width**2)
            vals += np.outer(c, h)
        return Q.SymbolField(model, vals[:, :, None, None])
    rows = _symbol_rows(cfg, grid)
    if rows is None:
        raise UnsupportedCheckError("non-euclidean quantization checks need options.rows")
    specs = cfg.options.get("symbol_functions") or cfg.test_functions
    F = model.plancherel_forward(T.sample_family(grid, specs))
    coef = rng.normal(size=(rows.size, len(specs))) + 1j * rng.normal(size=(rows.size, len(specs)))
    vals = np.einsum("rk,kxab->rxab", coef, F) / np.sqrt(grid.weights[rows])[:, None, None, None]
    return Q.SymbolField(model, vals, rows)


def _probe_functions(cfg: RunConfig, grid: GroupGrid, rng, count: int):
    specs = cfg.options.get("probe_functions")
    return [random_function(grid, rng, specs) for _ in range(count)]


def _shift_points(cfg: RunConfig, grid: GroupGrid):
    pts = cfg.options.get("z")
    if pts is None:
        raise UnsupportedCheckError("covariance checks need options.z")
    return [np.asarray(p, dtype=float) for p in pts]


# -- calibrate ------------------------------------------------------------------------


def run_calibrate(cfg: RunConfig) -> Report:
    """Plancherel constants per level, their stability and homogeneity.

    Constants are fitted against the continuous norms of the builtins. The
    euclidean identity check uses the grid quadrature norms, for which the
    discrete Parseval relation is exact. A per-layer fit runs when
    ``options.per_layer`` is set; it needs test functions that separate the
    layers.
    """
    report = Report()
    rec = _Recorder(cfg, "calibrate", report)
    per_layer = bool(cfg.options.get("per_layer", False))
    prev = None
    for level, grid, model in levels(cfg):
        values = T.sample_family(grid, cfg.test_functions)
        refs = [T.reference_norm2(grid, s) for s in cfg.test_functions]
        kappa, res = D.calibrate(model, values, refs)
        k2, _ = D.calibrate(model, 2.0 * values, [4.0 * r for r in refs])
        k = float(kappa[0])
        rec.info(level, "kappa", k)
        rec.add(level, "parseval_residual", float(res.max()), BASE_TOL, decay=True)
        rec.add(level, "kappa_rescale_change", abs(float(k2[0]) / k - 1.0), EXACT_TOL)
        if grid.group.kind == "euclidean":
            k_disc, _ = D.calibrate(model, values)
            rec.add(level, "kappa_minus_one", abs(float(k_disc[0]) - 1.0), CLOSED_FORM_TOL)
        if prev is not None:
            rec.add(level, "kappa_change", abs(k / prev - 1.0), KAPPA_STABILITY_TOL)
        prev = k
        layer_kappa = kappa
        if per_layer:
            layer_kappa, res_layer = D.calibrate(model, values, refs, per_layer=True)
            for name, val in zip(model.dual.layers, layer_kappa):
                rec.info(level, f"kappa[{name}]", float(val))
            rec.add(level, "parseval_residual_per_layer", float(res_layer.max()), BASE_TOL)
        report.calibration[f"{grid.group.label}/level{level}"] = {
            "global": k, "per_layer": [float(v) for v in layer_kappa],
            "layers": [str(l) for l in model.dual.layers]}
    return report


# -- Plancherel ---------------------------------------------------------------------


def run_plancherel(cfg: RunConfig) -> Report:
    """Parseval residuals after calibration and inversion round trips."""
    report = Report()
    rec = _Recorder(cfg, "check-plancherel", report)
    for level, grid, model in levels(cfg):
        cal, res = calibrated(cfg, grid, model, "continuous")
        values = T.sample_family(grid, cfg.test_functions)
        back = cal.plancherel_inverse(cal.plancherel_forward(values))
        sw = np.sqrt(grid.weights)
        rt = np.linalg.norm((back - values) * sw, axis=1) / np.linalg.norm(values * sw, axis=1)
        rec.add(level, "parseval_residual", float(res.max()), BASE_TOL, decay=True)
        rec.add(level, "inverse_roundtrip", float(rt.max()), BASE_TOL)
        rec.info(level, "kappa", float(cal.dual.kappa[0]))
        report.calibration[f"{grid.group.label}/level{level}"] = {
            "global": float(cal.dual.kappa[0]), "layers": [str(l) for l in cal.dual.layers]}
    return report


# -- semi-invariance, unitarity, homomorphism -------------------------------------------


def _random_shift_exact(model: D.DualModel, grid: GroupGrid, rng) -> np.ndarray:
    """Group element whose shift coordinate lies on the representation lattice."""
    g = grid.group
    z = np.array([rng.uniform(ax.nodes.min(), ax.nodes.max()) for ax in grid.axes])
    if g.kind == "euclidean":
        return z
    n = int(rng.integers(-max(1, model.M // 4), max(1, model.M // 4) + 1))
    axis = g.shift_axis
    z[axis] = np.exp(n * model.step) if g.kind in ("affine", "affine_line") else n * model.step
    return z


def _interior(model: D.DualModel, z) -> np.ndarray:
    n = int(np.rint(model.shift_of(z)))
    i = np.arange(model.M)
    return (i - n >= 0) & (i - n < model.M)


def _masked_hs(T: D.RepMatrix, rows, cols) -> float:
    w = T.weights
    mask = rows[:, None] & cols[None, :]
    return float(np.sqrt(np.sum(np.abs(T.values) ** 2 * w[:, None] * w[None, :] * mask)))


def semiinvariance_residuals(model: D.DualModel, z, points=None):
    """Interior-restricted residuals of semi-invariance and unitarity.

    Returns ``(semi, unitary)``, the largest relative HS residuals over the
    dual points.
    """
    g = model.group
    delta = float(G.modular(g, z))
    inside = _interior(model, z)
    # Columns whose image stays inside: pi maps sample j to sample j + n.
    n = int(np.rint(model.shift_of(z)))
    j = np.arange(model.M)
    src = (j + n >= 0) & (j + n < model.M)
    semi = unit = 0.0
    for k in (range(model.n_dual) if points is None else points):
        P = model.rep_apply(k, z)
        Dm = model.duflo_moore(k).matrix()
        lhs = P @ Dm @ P.adjoint()
        diff = lhs - Dm * (1.0 / delta)
        semi = max(semi, _masked_hs(diff, inside, inside) / _masked_hs(Dm, inside, inside))
        I = D.RepMatrix.identity(model.w[k])
        udiff = P.adjoint() @ P - I
        unit = max(unit, _masked_hs(udiff, src, src) / _masked_hs(I, src, src))
    return semi, unit


def homomorphism_residual(model: D.DualModel, x, y, points=None) -> float:
    """Interior-restricted ``|pi(x) pi(y) - pi(xy)|_HS / |pi(xy)|_HS`` over dual points."""
    g = model.group
    xy = G.multiply(g, x, y)
    nx = int(np.rint(model.shift_of(x)))
    ny = int(np.rint(model.shift_of(y)))
    i = np.arange(model.M)
    rows = (i - nx >= 0) & (i - nx < model.M) & (i - nx - ny >= 0) & (i - nx - ny < model.M)
    cols = (i + ny >= 0) & (i + ny < model.M) & (i + nx + ny >= 0) & (i + nx + ny < model.M)
    worst = 0.0
    for k in (range(model.n_dual) if points is None else points):
        lhs = model.rep_apply(k, x) @ model.rep_apply(k, y)
        rhs = model.rep_apply(k, xy)
        ref = _masked_hs(rhs, rows, cols)
        if ref > 0:
            worst = max(worst, _masked_hs(lhs - rhs, rows, cols) / ref)
    return worst


def run_semiinvariance(cfg: RunConfig) -> Report:
    """Semi-invariance, unitarity and homomorphism on random shift-exact elements."""
    report = Report()
    rec = _Recorder(cfg, "check-semiinvariance", report)
    trials = int(cfg.options.get("trials", 50))
    for level, grid, model in levels(cfg):
        rng = np.random.default_rng(cfg.seed + level)
        semi = unit = hom = 0.0
        for _ in range(trials):
            z = _random_shift_exact(model, grid, rng)
            s, u = semiinvariance_residuals(model, z)
            semi, unit = max(semi, s), max(unit, u)
            y = _random_shift_exact(model, grid, rng)
            hom = max(hom, homomorphism_residual(model, z, y))
        rec.add(level, "semiinvariance_residual", semi, EXACT_TOL)
        rec.add(level, "unitarity_residual", unit, EXACT_TOL)
        rec.add(level, "homomorphism_residual", hom, EXACT_TOL)
    return report


# -- duality ------------------------------------------------------------------------------


def _tolerance_for(grid: GroupGrid):
    """Round-off tolerance on shift-exact grids, base tolerance with decay otherwise."""
    if _shift_exact(grid.group):
        return EXACT_TOL, False
    return BASE_TOL, True


def run_duality(cfg: RunConfig) -> Report:
    """``<Op(A) u, v>`` against ``<A, Wig(u, v)>`` for random triples."""
    report = Report()
    rec = _Recorder(cfg, "check-duality", report)
    trials = int(cfg.options.get("trials", 10))
    for level, grid, model in levels(cfg):
        model = _quantization_model(cfg, grid, model)
        for tau in cfg.tau:
            rng = np.random.default_rng(cfg.seed + 1000 * level)
            tol, decay = _tolerance_for(grid)
            worst = worst_rank_one = 0.0
            for trial in range(trials):
                A = random_symbol(cfg, model, rng)
                u, v = _probe_functions(cfg, grid, rng, 2)
                worst = max(worst, Q.duality_residual(A, u, v, tau))
            u, v = _probe_functions(cfg, grid, rng, 2)
            W = Q.wig_rank_one(u, v, tau, model, rows=_symbol_rows(cfg, grid))
            worst_rank_one = Q.duality_residual(W, u, v, tau)
            rec.add(level, f"duality_residual[{tau}]", worst, tol, decay)
            rec.add(level, f"duality_rank_one[{tau}]", worst_rank_one, tol, decay)
    return report


# -- Op/Wig round trips and unitarity ----------------------------------------------------------


def run_roundtrip(cfg: RunConfig) -> Report:
    """Round trips and unitarity of every factor of the quantization."""
    report = Report()
    rec = _Recorder(cfg, "check-roundtrip", report)
    trials = int(cfg.options.get("trials", 3))
    # "base" compares the two kernel paths on the coarsest level only; the
    # direct quadrature dominates the cost of finer levels.
    compare = cfg.options.get("compare_paths", "base")
    for level, grid, model in levels(cfg):
        model = _quantization_model(cfg, grid, model)
        rng = np.random.default_rng(cfg.seed + 1000 * level)
        with_paths = compare is True or (compare == "base" and level == 0)
        bump = cfg.options.get("roundtrip_function", cfg.test_functions[0] if cfg.test_functions else None)
        if bump is not None:
            w = T.sample(grid, bump).values
            back = model.plancherel_inverse(model.plancherel_forward(w))
            sw = np.sqrt(grid.weights)
            rec.add(level, "plancherel_roundtrip", float(np.linalg.norm((back - w) * sw) / np.linalg.norm(w * sw)),
                    BASE_TOL)
        for tau in cfg.tau:
            tol, decay = _tolerance_for(grid)
            rt = unit = transfer = c_unit = c_rt = paths = 0.0
            for trial in range(trials):
                A = random_symbol(cfg, model, rng)
                B = random_symbol(cfg, model, rng)
                KA = Q.kernel_of_symbol(A, tau)
                KB = Q.kernel_of_symbol(B, tau)
                W = Q.wig_tau(Q.upsilon(KA), tau, model)
                na, nb = A.norm(), B.norm()
                rt = max(rt, (W - A).norm() / na)
                unit = max(unit, abs(KA.hs_norm() / na - 1.0))
                transfer = max(transfer, abs(KA.inner(KB) - A.inner(B)) / (na * nb))
                L = Q.symbol_to_kernel_factor(A)
                CL = Q.c_tau(L, tau)
                c_unit = max(c_unit, abs(CL.hs_norm() / L.hs_norm() - 1.0))
                c_rt = max(c_rt, (Q.c_tau_inv(CL, tau) - L).hs_norm() / L.hs_norm())
                if trial == 0 and with_paths:
                    K2 = Q.kernel_of_symbol_direct(A, tau)
                    paths = max(paths, _path_gap(KA, K2, tau, cfg))
            rec.add(level, f"op_wig_roundtrip[{tau}]", rt, tol, decay)
            rec.add(level, f"op_unitarity[{tau}]", unit, tol, decay)
            rec.add(level, f"inner_transfer[{tau}]", transfer, tol, decay)
            rec.add(level, f"c_unitarity[{tau}]", c_unit, tol, decay)
            rec.add(level, f"c_roundtrip[{tau}]", c_rt, tol, decay)
            if with_paths:
                rec.add(level, f"path_agreement[{tau}]", paths, tol, decay)
    return report


def _path_gap(K1: Q.KernelMatrix, K2: Q.KernelMatrix, tau: str, cfg: RunConfig) -> float:
    """Relative gap between the two kernel paths on the pairs resolved by the grid.

    The factor path only knows the kernel on the grid box, the direct path
    evaluates the dual sum anywhere. Pairs whose change-of-variables
    argument leaves the box are excluded.
    """
    grid = K1.grid
    g = grid.group
    K1, K2 = Q._common_blocks(K1, K2)
    if g.kind != "euclidean":
        X, Y = Q._pairs(grid, K1.row_index, K1.col_index)
        arg = G.multiply(g, X, G.inverse(g, Y))
        inside = np.ones(arg.shape[0], bool)
        for k, ax in enumerate(grid.axes):
            if ax.periodic:
                continue
            lo, hi = ax.cell_edges()
            inside &= (arg[:, k] >= lo[0]) & (arg[:, k] <= hi[-1])
        mask = inside.reshape(K1.values.shape)
        K1 = Q.KernelMatrix(grid, K1.values * mask, K1.rows, K1.cols)
        K2 = Q.KernelMatrix(grid, K2.values * mask, K2.rows, K2.cols)
    ref = K1.hs_norm()
    return (K1 - K2).hs_norm() / ref if ref > 0 else 0.0


# -- covariance ------------------------------------------------------------------------------


def run_covariance(cfg: RunConfig) -> Report:
    """End-to-end covariance, its rank-one form and the three factor identities."""
    report = Report()
    rec = _Recorder(cfg, "check-covariance", report)
    for level, grid, model in levels(cfg):
        model = _quantization_model(cfg, grid, model)
        rng = np.random.default_rng(cfg.seed + 1000 * level)
        zs = _shift_points(cfg, grid)
        exact = _shift_exact(grid.group)
        tol, decay = (EXACT_TOL, False) if exact else (BASE_TOL, True)
        A = random_symbol(cfg, model, rng)
        u, v = _probe_functions(cfg, grid, rng, 2)
        K = Q.symbol_to_kernel_factor(A)
        rows = _symbol_rows(cfg, grid)
        kernel_gap = plancherel_gap = 0.0
        for z in zs:
            kernel_gap = max(kernel_gap, Cv.kernel_translation_defect(K, z, [u, v]))
            plancherel_gap = max(plancherel_gap, Cv.plancherel_translation_defect(u, z, model))
        rec.add(level, "kernel_translation", kernel_gap, tol, decay)
        rec.add(level, "plancherel_translation", plancherel_gap, tol, decay)
        for tau in cfg.tau:
            cov = wig = change_gap = 0.0
            for z in zs:
                cov = max(cov, Cv.covariance_defect(A, z, tau))
                wig = max(wig, Cv.wigner_covariance_defect(u, v, z, tau, model, rows))
                change_gap = max(change_gap, Cv.change_of_variables_translation_defect(K, z, tau))
            rec.add(level, f"covariance_defect[{tau}]", cov, tol, decay)
            rec.add(level, f"wigner_covariance_defect[{tau}]", wig, tol, decay)
            rec.add(level, f"change_of_variables_translation[{tau}]", change_gap, tol, decay)
    return report


# -- abelian oracle ----------------------------------------------------------------------------


def _fourier_multiplier(grid: GroupGrid, g_of_xi, u: np.ndarray) -> np.ndarray:
    """``g(D) u`` on a periodic grid by the FFT, with ``g`` evaluated at the DFT frequencies."""
    shape = grid.shape
    freqs = np.meshgrid(*[np.fft.fftfreq(n, d=ax.step) for n, ax in zip(shape, grid.axes)], indexing="ij")
    xi = np.stack([f.ravel() for f in freqs], axis=-1)
    # Node offsets cancel: the multiplier acts on the coefficients of exp(2 pi i x xi).
    coef = np.fft.fftn(u.reshape(shape)).ravel()
    return np.fft.ifftn((coef * g_of_xi(xi)).reshape(shape)).ravel()


def run_abelian_oracle(cfg: RunConfig) -> Report:
    """Pipeline against the brute-force oracle, and oracle closed forms."""
    if cfg.group.kind != "euclidean":
        raise UnsupportedCheckError("check-abelian-oracle needs a euclidean group")
    report = Report()
    rec = _Recorder(cfg, "check-abelian-oracle", report)
    trials = int(cfg.options.get("trials", 5))
    for level, grid, model in levels(cfg):
        rng = np.random.default_rng(cfg.seed + 1000 * level)
        for tau in cfg.tau:
            worst = 0.0
            for trial in range(trials):
                A = random_symbol(cfg, model, rng)
                u = random_function(grid, rng)
                worst = max(worst, O.pipeline_vs_oracle(A, u, tau))
            rec.add(level, f"pipeline_vs_oracle[{tau}]", worst, ORACLE_TOL)
        xi = np.array([p.param for p in model.dual.points], dtype=float)
        x = grid.nodes
        u = random_function(grid, rng)
        scale = norm(u)

        def oracle(values, tau="kohn_nirenberg"):
            return O.kn_oracle(O.ScalarSymbol(grid, xi, model.dual.weights, values), u, tau).values

        ones = np.ones((grid.size, xi.shape[0]))
        rec.add(level, "oracle_identity", np.linalg.norm(oracle(ones) - u.values) / np.linalg.norm(u.values),
                CLOSED_FORM_TOL)
        f = _bandlimited(rng, grid.shape).ravel()
        ug = random_function(grid, rng)
        # Keep the product bandlimited: both factors use a quarter of the band.
        prod = O.kn_oracle(O.ScalarSymbol(grid, xi, model.dual.weights, np.outer(f, np.ones(xi.shape[0]))),
                           ug, "kohn_nirenberg").values
        rec.add(level, "oracle_multiplication", np.linalg.norm(prod - f * ug.values) / np.linalg.norm(f * ug.values),
                CLOSED_FORM_TOL)
        width = 1.0

        def gfun(k):
            return np.exp(-0.5 * np.sum(k**2, axis=1) / width**2)

        target = _fourier_multiplier(grid, gfun, u.values)
        worst = 0.0
        for tau in cfg.tau:
            out = oracle(np.outer(np.ones(grid.size), gfun(xi)), tau)
            worst = max(worst, np.linalg.norm(out - target) / np.linalg.norm(target))
        rec.add(level, "oracle_multiplier", worst, CLOSED_FORM_TOL)
        period = np.array([ax.period for ax in grid.axes])
        xi0 = 3.0 / period
        mod = np.exp(2j * np.pi * (x @ xi0))
        out = oracle(np.outer(mod, gfun(xi)))
        ref = mod * target
        rec.add(level, "oracle_modulation", np.linalg.norm(out - ref) / np.linalg.norm(ref), CLOSED_FORM_TOL)
        del scale
    return report


# -- products ------------------------------------------------------------------------------------


def _dual_gap(m1: D.DualModel, m2: D.DualModel) -> float:
    """Largest difference of weights, Duflo-Moore values, rep weights and frequencies."""
    if m1.n_dual != m2.n_dual or m1.M != m2.M or m1.freq.shape != m2.freq.shape:
        return float("inf")
    gaps = [np.max(np.abs(m1.dual.weights - m2.dual.weights)), np.max(np.abs(m1.d - m2.d)),
            np.max(np.abs(m1.w - m2.w)), np.max(np.abs(m1.freq - m2.freq))]
    return float(max(gaps))


def run_product(cfg: RunConfig) -> Report:
    """Tensor rule for products: euclidean(1) x euclidean(1) and affine x R."""
    report = Report()
    if cfg.group.kind == "euclidean" and cfg.group.n == 2:
        rec = _Recorder(cfg, "check-product", report)
        for level, grid, model in levels(cfg):
            rng = np.random.default_rng(cfg.seed + 1000 * level)
            g1 = GroupGrid(G.euclidean(1), grid.axes[:1])
            g2 = GroupGrid(G.euclidean(1), grid.axes[1:])
            m1, m2 = D.dual_model(g1, {}), D.dual_model(g2, {})
            rec.add(level, "dual_tensor_gap", _dual_gap(D.product_dual(m1, m2), model), EXACT_TOL)
            for tau in cfg.tau:
                sub = RunConfig(group=G.euclidean(1), axes=list(grid.axes[:1]), options=cfg.options)
                A1 = random_symbol(sub, m1, rng).values[:, :, 0, 0]
                sub.axes = list(grid.axes[1:])
                A2 = random_symbol(sub, m2, rng).values[:, :, 0, 0]
                full = np.einsum("ak,bl->abkl", A1, A2).reshape(grid.size, model.n_dual)
                A = Q.SymbolField(model, full[:, :, None, None])
                K = Q.kernel_of_symbol(A, tau)
                K1 = Q.kernel_of_symbol(Q.SymbolField(m1, A1[:, :, None, None]), tau)
                K2 = Q.kernel_of_symbol(Q.SymbolField(m2, A2[:, :, None, None]), tau)
                diff = np.linalg.norm(K.dense() - np.kron(K1.dense(), K2.dense())) / np.linalg.norm(K.dense())
                rec.add(level, f"tensor_factorization[{tau}]", diff, EXACT_TOL)
        return report
    if cfg.group.kind == "affine_line":
        rec = _Recorder(cfg, "check-product", report)
        for level, grid, model in levels(cfg):
            aff = D.dual_model(GroupGrid(G.affine(), grid.axes[:2]),
                               {k: v for k, v in model.params["factors"][0].items() if k in ("s_min", "s_max")})
            line = D.dual_model(GroupGrid(G.euclidean(1), grid.axes[2:]), model.params["factors"][1])
            tensor = D.product_dual(aff, line)
            rec.add(level, "dual_tensor_gap", _dual_gap(tensor, model), EXACT_TOL)
            d_gap = np.max(np.abs(model.d - np.repeat(aff.d, line.n_dual, axis=0)))
            rec.add(level, "duflo_moore_tensor_gap", float(d_gap), EXACT_TOL)
        report.extend(run_plancherel(cfg))
        return report
    raise UnsupportedCheckError("check-product needs euclidean(2) or affine_line")


CHECKS = {
    "calibrate": run_calibrate,
    "check-plancherel": run_plancherel,
    "check-semiinvariance": run_semiinvariance,
    "check-duality": run_duality,
    "check-covariance": run_covariance,
    "check-abelian-oracle": run_abelian_oracle,
    "check-product": run_product,
    "check-roundtrip": run_roundtrip,
}


def run_check(cfg: RunConfig, name: str) -> Report:
    """Run the named check and return its report."""
    if name not in CHECKS:
        raise UnsupportedCheckError(f"unknown check {name!r}; choose from {sorted(CHECKS)}")
    return CHECKS[name](cfg)


def refine_study(cfg: RunConfig, name: str) -> Report:
    """Run a check over at least two refinement levels, with decay ratios."""
    if cfg.levels < 2:
        raise PreconditionError("a refinement study needs levels >= 2")
    return run_check(cfg, name)
