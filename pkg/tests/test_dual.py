import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantgroup import checks
from quantgroup import dual as D
from quantgroup import groups as G
from quantgroup import testfunctions as T
from quantgroup.grids import Axis, GroupGrid, SampledFunction, haar_grid, lattice_axis


def euclid_grid(count=16, half=4.0):
    return haar_grid(G.euclidean(1), [{"lo": -half, "hi": half, "count": count}])


def affine_grid(half=8, step=0.2, bcount=41):
    return GroupGrid(G.affine(), [lattice_axis(half, step, "geometric"), Axis(-8.0, 8.0, bcount)])


def bianchi_grid(g, n=9, half=3, step=0.5):
    return GroupGrid(g, [Axis(-3.6, 3.6, n), Axis(-3.6, 3.6, n), lattice_axis(half, step)])


# -- representation-space algebra -------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_rep_matrix_algebra(seed):
    rng = np.random.default_rng(seed)
    M = 5
    w = rng.uniform(0.2, 2.0, M)
    A, B = (D.RepMatrix(rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M)), w) for _ in range(2))
    assert np.allclose((A @ B).adjoint().values, (B.adjoint() @ A.adjoint()).values)
    assert (A @ B).trace() == pytest.approx((B @ A).trace(), rel=1e-10)
    I = D.RepMatrix.identity(w)
    assert np.allclose((A @ I).values, A.values)
    assert A.hs_norm() ** 2 == pytest.approx((A.adjoint() @ A).trace().real, rel=1e-10)
    assert A.operator_norm() <= A.hs_norm() * (1 + 1e-12)


def test_duflo_moore_must_be_positive():
    with pytest.raises(D.DualError):
        D.DufloMoore(np.array([1.0, 0.0]), np.ones(2))


# -- representations ---------------------------------------------------------------


def test_euclidean_character_value():
    grid = euclid_grid()
    model = D.dual_model(grid, {"axes": [{"lo": -4.0, "hi": 4.0, "count": 4}]})
    k = model.point_index(D.DualPoint("R", (2.0,)))
    rep = model.rep_apply(k, [0.25])
    assert rep.values.shape == (1, 1)
    assert rep.values[0, 0] * rep.weights[0] == pytest.approx(-1.0, abs=1e-14)


@pytest.mark.parametrize("grid", [euclid_grid(), affine_grid(), bianchi_grid(G.bianchi("V"))], ids=str)
def test_identity_element_acts_as_identity(grid):
    model = D.dual_model(grid)
    e = G.identity(grid.group)
    for k in range(0, model.n_dual, max(1, model.n_dual // 5)):
        assert np.allclose(model.rep_apply(k, e).values, D.RepMatrix.identity(model.w[k]).values)


def test_affine_dilation_is_weighted_permutation():
    grid = affine_grid()
    model = D.dual_model(grid)
    n = 3
    a = np.exp(n * model.step)
    phi = np.random.default_rng(0).standard_normal(model.M)
    out = model.rep_apply(0, [a, 0.0]).apply(phi)
    s = np.exp(model.t[0])
    for i in range(model.M):
        j = i - n
        if 0 <= j < model.M:
            assert s[j] == pytest.approx(a * s[i], rel=1e-12)
            assert out[i] == pytest.approx(a**0.5 * phi[j], rel=1e-12)
        else:
            assert out[i] == 0


def test_duflo_moore_operators():
    e_model = D.dual_model(euclid_grid())
    assert np.all(e_model.d == 1.0)
    a_model = D.dual_model(affine_grid())
    assert np.allclose(a_model.d, np.exp(a_model.t))
    v_model = D.dual_model(bianchi_grid(G.bianchi("V")))
    assert np.allclose(v_model.d, np.exp(-2.0 * v_model.t))
    line = D.dual_model(GroupGrid(G.affine_line(), list(affine_grid().axes) + [Axis(-4.0, 4.0, 8, periodic=True)]))
    assert np.allclose(line.d, np.repeat(a_model.d, 8, axis=0))


def test_plancherel_weights():
    model = D.dual_model(euclid_grid(), {"axes": [{"lo": -2.0, "hi": 2.0, "count": 8}]})
    assert np.allclose(model.dual.weights, 4.0 / 8)
    v_dual = D.bianchi_dual_grid(G.bianchi("V"), {"lambda": {"count": 16}, "kappa": 0.7})
    assert np.allclose(v_dual.weights, 0.7 / 16)
    iv = D.bianchi_dual_grid(G.bianchi("IV"), {"lambda": {"lo": 1.5, "hi": 2.5, "count": 1, "scale": "linear"},
                                                "kappa": 0.7})
    plus = [k for k, p in enumerate(iv.points) if p.layer == "+"][0]
    assert iv.points[plus].param == (2.0,)
    assert iv.weights[plus] == pytest.approx(0.7 * 3.0 * 1.0)


def test_vi_density_uses_component_parity():
    g = G.bianchi("VI", 0.5)
    dual = D.bianchi_dual_grid(g, {"lambda": {"lo": 1.5, "hi": 2.5, "count": 1, "scale": "linear"}})
    by_layer = {p.layer: w for p, w in zip(dual.points, dual.weights)}
    assert by_layer[1] == pytest.approx(0.5) and by_layer[3] == pytest.approx(0.5)
    assert by_layer[2] == pytest.approx(1.0) and by_layer[4] == pytest.approx(1.0)


def test_cross_sections():
    v = G.bianchi("V")
    lam = 0.3
    assert np.allclose(D.cross_section(v, D.DualPoint("T", (lam,))), [np.cos(2 * np.pi * lam), np.sin(2 * np.pi * lam)])
    assert np.allclose(D.cross_section(v, D.DualPoint("T", (0.0,))), [1.0, 0.0])
    vii = G.bianchi("VII", 1.0)
    assert np.allclose(D.cross_section(vii, D.DualPoint(2, (3.0,))), [3.0, 0.0])
    with pytest.raises(D.DualError):
        D.cross_section(v, D.DualPoint("T", (1.2,)))
    with pytest.raises(D.DualError):
        D.cross_section(vii, D.DualPoint(1, (3.0,)))


@pytest.mark.parametrize("g", [G.bianchi("IV"), G.bianchi("V"), G.bianchi("VI", 0.5), G.bianchi("VII", 1.0)],
                         ids=lambda g: g.label)
def test_cross_sections_meet_each_orbit_once(g):
    assert D.validate_cross_section(g, n_orbits=6)


# -- semi-invariance, unitarity, homomorphism --------------------------------------------


@pytest.mark.parametrize("grid", [affine_grid(), bianchi_grid(G.bianchi("V")), bianchi_grid(G.bianchi("VII", 1.0))],
                         ids=str)
def test_semiinvariance_and_homomorphism_property(grid):
    model = D.dual_model(grid)
    points = list(range(0, model.n_dual, max(1, model.n_dual // 4)))

    @given(st.integers(0, 2**32 - 1))
    def check(seed):
        rng = np.random.default_rng(seed)
        z = checks._random_shift_exact(model, grid, rng)
        y = checks._random_shift_exact(model, grid, rng)
        semi, unit = checks.semiinvariance_residuals(model, z, points)
        assert semi <= 1e-10 and unit <= 1e-10
        assert checks.homomorphism_residual(model, z, y, points) <= 1e-10

    check()


def test_ad_matches_explicit_conjugation():
    grid = affine_grid()
    model = D.dual_model(grid)
    rng = np.random.default_rng(3)
    F = rng.standard_normal((model.n_dual, model.M, model.M)) + 0j
    z = [np.exp(2 * model.step), 0.7]
    out = model.ad(z, F)
    for k in range(model.n_dual):
        P = model.rep_apply(k, z)
        ref = P @ D.RepMatrix(F[k], model.w[k]) @ P.adjoint()
        assert np.allclose(out[k], ref.values, atol=1e-12)


# -- Fourier and Plancherel transforms ------------------------------------------------------


@pytest.mark.parametrize("grid", [euclid_grid(), affine_grid(), bianchi_grid(G.bianchi("V"))], ids=str)
def test_fourier_of_unit_mass_is_identity(grid):
    model = D.dual_model(grid)
    e = grid.nearest_node(G.identity(grid.group))
    spike = np.zeros(grid.size)
    spike[e] = 1.0 / grid.weights[e]
    F = model.fourier_op(spike)
    mask = model.window_mask()
    for k in range(0, model.n_dual, max(1, model.n_dual // 5)):
        ref = D.RepMatrix.identity(model.w[k]).values * mask[k]
        assert np.allclose(F[k], ref, atol=1e-12 * np.abs(ref).max())


def test_euclidean_fourier_of_gaussian():
    grid = euclid_grid(64, 8.0)
    model = D.dual_model(grid)
    x = grid.nodes[:, 0]
    w = np.exp(-0.5 * (x - 1.0) ** 2)
    xi = np.array([p.param[0] for p in model.dual.points])
    # int exp(-(x-1)^2/2) exp(-2 pi i x xi) dx
    closed = np.sqrt(2 * np.pi) * np.exp(-2 * np.pi**2 * xi**2) * np.exp(-2j * np.pi * xi)
    assert np.max(np.abs(model.fourier_op(w)[:, 0, 0] - closed)) < 1e-10
    assert np.allclose(model.plancherel_forward(w)[:, 0, 0], model.fourier_op(w)[:, 0, 0])


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_fourier_linearity(seed, alpha):
    grid = affine_grid(4, 0.4, 12)
    model = D.dual_model(grid)
    rng = np.random.default_rng(seed)
    w1, w2 = rng.standard_normal((2, grid.size))
    lhs = model.fourier_op(alpha * w1 + w2)
    rhs = alpha * model.fourier_op(w1) + model.fourier_op(w2)
    assert np.allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))


def test_affine_plancherel_transform_is_fourier_times_root_d():
    grid = affine_grid()
    model = D.dual_model(grid)
    w = T.sample(grid, {"kind": "gaussian", "width": [0.6, 1.0]}).values
    F = model.fourier_op(w)
    P = model.plancherel_forward(w)
    for k in range(model.n_dual):
        root = D.DufloMoore(model.d[k], model.w[k]).sqrt().matrix()
        assert np.allclose(P[k], (D.RepMatrix(F[k], model.w[k]) @ root).values, atol=1e-12)


@pytest.mark.parametrize("grid", [euclid_grid(), affine_grid()], ids=str)
def test_zero_fields(grid):
    model = D.dual_model(grid)
    assert np.all(model.plancherel_forward(np.zeros(grid.size)) == 0)
    assert np.all(model.plancherel_inverse(np.zeros((model.n_dual, model.M, model.M))) == 0)


def test_euclidean_inverse_is_fourier_inversion_sum():
    grid = euclid_grid(16, 4.0)
    model = D.dual_model(grid)
    rng = np.random.default_rng(4)
    F = rng.standard_normal((model.n_dual, 1, 1)) + 1j * rng.standard_normal((model.n_dual, 1, 1))
    xi = np.array([p.param[0] for p in model.dual.points])
    x = grid.nodes[:, 0]
    direct = np.exp(2j * np.pi * np.outer(x, xi)) @ (model.dual.weights * F[:, 0, 0])
    assert np.allclose(model.plancherel_inverse(F), direct, atol=1e-12)


def test_affine_plancherel_round_trip_at_base():
    grid = affine_grid(8, 0.2, 80)
    model = D.dual_model(grid, {"s_min": 1e-9})
    vals = T.sample_family(grid, [{"kind": "gaussian", "width": [0.6, 1.0]}, {"kind": "bump", "width": [2.0, 4.0]},
                                  {"kind": "hermite", "order": [1, 1], "width": [0.6, 1.0]}])
    kappa, _ = D.calibrate(model, vals)
    model = model.with_kappa(kappa)
    w = vals[1]
    back = model.plancherel_inverse(model.plancherel_forward(w))
    sw = np.sqrt(grid.weights)
    assert np.linalg.norm((back - w) * sw) / np.linalg.norm(w * sw) <= 5e-2


@pytest.mark.parametrize("grid", [euclid_grid(), affine_grid(4, 0.4, 16), bianchi_grid(G.bianchi("V"), 7, 2)],
                         ids=str)
def test_fast_and_dense_sums_agree(grid):
    fast = D.dual_model(grid)
    dense = D.dual_model(grid)
    dense.backend = "direct"
    rng = np.random.default_rng(5)
    vals = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    Ff, Fd = fast.forward(vals), dense.forward(vals)
    assert np.max(np.abs(Ff - Fd)) <= 1e-9 * np.abs(Fd).max()
    F = rng.standard_normal(Ff.shape) + 1j * rng.standard_normal(Ff.shape)
    pts = grid.nodes[rng.integers(0, grid.size, 40)]
    pts = G.multiply(grid.group, pts[:20], G.inverse(grid.group, pts[20:]))
    for kind in ("adjoint", "direct"):
        a, b = fast.contract(F, kind=kind), dense.contract(F, kind=kind)
        assert np.max(np.abs(a - b)) <= 1e-9 * np.abs(b).max()
        a, b = fast.contract(F, pts, kind=kind), dense.contract(F, pts, kind=kind)
        assert np.max(np.abs(a - b)) <= 1e-9 * np.abs(b).max()


def test_scattered_transform_agrees_with_dense_sum():
    rng = np.random.default_rng(6)
    freq = rng.uniform(-5, 5, (30, 4, 2))
    targets = rng.uniform(-3, 3, (50, 2))
    G_ = rng.standard_normal((3, 120)) + 1j * rng.standard_normal((3, 120))
    dense = G_ @ np.exp(1j * freq.reshape(-1, 2) @ targets.T)
    assert np.allclose(D._nufft_scattered(G_, freq, targets, 1), dense, atol=1e-9 * np.abs(dense).max())


# -- calibration --------------------------------------------------------------------


def test_euclidean_calibration_is_one():
    grid = euclid_grid(32, 6.0)
    model = D.dual_model(grid)
    vals = T.sample_family(grid, [{"kind": "gaussian", "width": [1.0]}, {"kind": "bump", "width": [3.0]},
                                  {"kind": "hermite", "order": [1], "width": [1.1]}])
    kappa, residuals = D.calibrate(model, vals)
    assert abs(kappa[0] - 1.0) <= 1e-6
    assert np.max(residuals) <= 1e-10
    kappa2, _ = D.calibrate(model, 2 * vals)
    assert np.array_equal(kappa, kappa2) or np.allclose(kappa, kappa2, rtol=1e-15, atol=0)


def test_calibration_needs_three_functions():
    grid = euclid_grid()
    with pytest.raises(D.DualError):
        D.calibrate(D.dual_model(grid), np.ones((2, grid.size)))


# -- products ----------------------------------------------------------------------


def test_product_of_euclidean_duals():
    a1, a2 = Axis(-2, 2, 8, periodic=True), Axis(-3, 3, 6, periodic=True)
    m1 = D.dual_model(GroupGrid(G.euclidean(1), [a1]))
    m2 = D.dual_model(GroupGrid(G.euclidean(1), [a2]))
    prod = D.product_dual(m1, m2)
    full = D.dual_model(GroupGrid(G.euclidean(2), [a1, a2]))
    assert np.allclose(prod.dual.weights, full.dual.weights)
    assert np.allclose(prod.freq, full.freq)
    assert [p.param for p in prod.dual.points] == [p.param for p in full.dual.points]


def test_affine_line_dual_is_tensor_construction():
    axes = list(affine_grid(4, 0.4, 16).axes) + [Axis(-4.0, 4.0, 8, periodic=True)]
    model = D.dual_model(GroupGrid(G.affine_line(), axes), {"kappa": 0.8})
    aff = D.dual_model(GroupGrid(G.affine(), axes[:2]))
    line = D.dual_model(GroupGrid(G.euclidean(1), axes[2:]))
    assert model.n_dual == 2 * 8
    assert np.allclose(model.dual.weights, 0.8 * np.repeat(aff.dual.raw_weights, 8) * np.tile(line.dual.weights, 2))
    assert np.allclose(model.d, np.repeat(aff.d, 8, axis=0))
    with pytest.raises(D.DualError):
        D.product_dual(line, aff)


def test_dual_errors():
    with pytest.raises(D.DualError):
        D.dual_model(euclid_grid(), {"axes": [{"lo": 1.0, "hi": 1.0, "count": 4}]})
    with pytest.raises(D.DualError):
        D.dual_model(affine_grid(), {"s_min": 10.0})
    with pytest.raises(D.DualError):
        D.bianchi_dual_grid(G.bianchi("V"), {"lambda": {"count": 0}})
