import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantgroup import dual as D
from quantgroup import groups as G
from quantgroup import quantization as Q
from quantgroup.grids import GridError, SampledFunction, haar_grid, inner, norm

TAUS = ["kohn_nirenberg", "right", "euclidean_weyl"]


def periodic_grid(count=32, half=4.0):
    return haar_grid(G.euclidean(1), [{"lo": -half, "hi": half, "count": count}])


def model_for(grid):
    return D.dual_model(grid)


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def bandlimited(rng, n, keep):
    coef = np.zeros(n, dtype=complex)
    k = np.fft.fftfreq(n) * n
    band = np.abs(k) < keep
    coef[band] = rand_complex(rng, int(band.sum()))
    return np.fft.ifft(coef) * n


def node_index(grid, x):
    """Flat index of the node at ``x`` after wrapping into the box."""
    ax = grid.axes[0]
    return int(round((grid.wrap(np.array([[x]]))[0, 0] - ax.lo) / ax.step)) % grid.shape[0]


def euclid_symbol(model, rng):
    grid = model.grid
    xi = np.array([p.param for p in model.dual.points])[:, 0]
    vals = np.zeros((grid.size, model.n_dual), dtype=complex)
    for _ in range(2):
        vals += np.outer(bandlimited(rng, grid.size, grid.size // 4), np.exp(-0.5 * (xi - rng.uniform(-1, 1)) ** 2))
    return Q.SymbolField(model, vals[:, :, None, None])


# -- Upsilon ----------------------------------------------------------------------------


def test_diagonal_spike_gives_identity():
    grid = periodic_grid()
    K = Q.KernelMatrix(grid, np.diag(1.0 / grid.weights))
    u = np.random.default_rng(1).standard_normal(grid.size)
    assert np.allclose(Q.upsilon(K)(u).values, u, atol=1e-14)


def test_rank_one_kernel_action():
    rng = np.random.default_rng(2)
    grid = periodic_grid()
    u, v, w = (rand_complex(rng, grid.size) for _ in range(3))
    K = Q.KernelMatrix(grid, np.outer(u, v))
    out = Q.upsilon(K)(w).values
    expected = u * inner(SampledFunction(grid, w), SampledFunction(grid, np.conj(v)))
    assert np.allclose(out, expected, atol=1e-12)
    R = Q.KernelMatrix.rank_one(SampledFunction(grid, u), SampledFunction(grid, v))
    assert np.allclose(Q.upsilon(R)(w).values, u * inner(SampledFunction(grid, w), SampledFunction(grid, v)))


def test_upsilon_inverse_and_unitarity():
    rng = np.random.default_rng(3)
    grid = haar_grid(G.euclidean(1), [{"lo": 0.0, "hi": 3.0, "count": 7}])
    K = Q.KernelMatrix(grid, rand_complex(rng, 7, 7))
    T = Q.upsilon(K)
    assert Q.upsilon_inv(T) is K
    back = Q.upsilon_inv(T.matrix(), grid)
    assert np.allclose(back.values, K.values, atol=1e-13)
    # HS norm on L^2(m): conjugate the sample matrix by the square-root weights.
    s = np.sqrt(grid.weights)
    hs = np.linalg.norm(s[:, None] * T.matrix() / s[None, :])
    assert hs == pytest.approx(K.hs_norm(), rel=1e-12)


def test_upsilon_inverse_needs_grid_and_shape():
    grid = periodic_grid(8)
    with pytest.raises(Q.QuantizationError):
        Q.upsilon_inv(np.eye(8))
    with pytest.raises(GridError):
        Q.upsilon_inv(np.eye(5), grid)


def test_kernel_must_be_finite():
    grid = periodic_grid(4)
    with pytest.raises(Q.QuantizationError):
        Q.KernelMatrix(grid, np.full((4, 4), np.nan))


def test_block_kernels_combine_on_union():
    rng = np.random.default_rng(4)
    grid = periodic_grid(6)
    full = Q.KernelMatrix(grid, rand_complex(rng, 6, 6))
    a = full.restrict([0, 2], None)
    b = full.restrict([2, 5], None)
    diff = (a + b).dense() - a.dense() - b.dense()
    assert np.allclose(diff, 0)
    assert a.inner(full) == pytest.approx(a.inner(a))
    assert (2 * a).hs_norm() == pytest.approx(2 * a.hs_norm())


# -- change of variables ----------------------------------------------------------------


def test_kohn_nirenberg_change_of_variables():
    rng = np.random.default_rng(5)
    grid = periodic_grid(16)
    K = Q.KernelMatrix(grid, rand_complex(rng, 16, 16))
    x = grid.nodes[:, 0]
    CK = Q.c_tau(K, "kohn_nirenberg").dense()
    L = Q.c_tau_inv(K, "kohn_nirenberg").dense()
    for i in range(16):
        for j in range(16):
            k = node_index(grid, x[i] - x[j])
            assert CK[i, j] == pytest.approx(K.values[i, k], abs=1e-12)
            assert L[i, j] == pytest.approx(K.values[i, k], abs=1e-12)


def test_right_change_of_variables():
    rng = np.random.default_rng(6)
    grid = periodic_grid(16)
    K = Q.KernelMatrix(grid, rand_complex(rng, 16, 16))
    x = grid.nodes[:, 0]
    CK = Q.c_tau(K, "right").dense()
    for i in range(16):
        for j in range(16):
            assert CK[i, j] == pytest.approx(K.values[j, node_index(grid, x[i] - x[j])], abs=1e-12)


def test_weyl_inverse_on_smooth_kernel():
    # Wide box: the periodic wrap of x + y/2 must land where the kernel vanishes.
    grid = periodic_grid(128, half=16.0)
    x = grid.nodes[:, 0]

    def L(p, q):
        return np.exp(-(p**2) / 1.5 - (q - 0.3) ** 2 / 2.0) * np.exp(0.7j * p)

    Lk = Q.KernelMatrix(grid, L(x[:, None], x[None, :]))
    out = Q.c_tau_inv(Lk, "euclidean_weyl").dense()
    expected = L(x[:, None] + x[None, :] / 2, x[:, None] - x[None, :] / 2)
    assert np.max(np.abs(out - expected)) < 1e-10


def test_identity_argument_row():
    rng = np.random.default_rng(7)
    grid = periodic_grid(16)
    K = Q.KernelMatrix(grid, rand_complex(rng, 16, 16))
    e = node_index(grid, 0.0)
    CK = Q.c_tau(K, "kohn_nirenberg").dense()
    assert np.allclose(np.diag(CK), K.values[:, e], atol=1e-12)


@pytest.mark.parametrize("tau", TAUS)
def test_change_of_variables_round_trip(tau):
    rng = np.random.default_rng(8)
    grid = periodic_grid(16)
    K = Q.KernelMatrix(grid, rand_complex(rng, 16, 16))
    back = Q.c_tau_inv(Q.c_tau(K, tau), tau)
    assert np.max(np.abs(back.dense() - K.values)) < 1e-10
    assert Q.c_tau(K, tau).hs_norm() == pytest.approx(K.hs_norm(), rel=1e-10)


def test_half_shift_is_unitary_and_invertible():
    rng = np.random.default_rng(9)
    vals = rand_complex(rng, 12, 3)
    shifts = np.array([[0.5], [-1.5], [2.25]])
    out = Q._half_shift(vals, shifts, (12,))
    assert np.allclose(np.linalg.norm(out, axis=0), np.linalg.norm(vals, axis=0))
    assert np.allclose(Q._half_shift(out, -shifts, (12,)), vals, atol=1e-13)


def test_weyl_rejected_off_euclidean():
    with pytest.raises(Q.QuantizationError):
        Q.tau_map("euclidean_weyl", G.affine())
    with pytest.raises(Q.QuantizationError):
        Q.tau_map("nonsense", G.euclidean(1))


def test_ordering_maps():
    g = G.euclidean(2)
    x = np.array([[1.0, -2.0]])
    assert np.allclose(Q.tau_map("kohn_nirenberg", g)(x), 0)
    assert np.allclose(Q.tau_map("right", g)(x), x)
    assert np.allclose(Q.tau_map("euclidean_weyl", g)(x), 0.5 * x)
    with pytest.raises(Q.QuantizationError):
        Q.tau_map(Q.tau_map("right", g), G.euclidean(1))


# -- quantization --------------------------------------------------------------------------


def test_unit_symbol_is_identity_on_band():
    rng = np.random.default_rng(10)
    grid = periodic_grid(32)
    model = model_for(grid)
    A = Q.SymbolField(model, np.ones((grid.size, model.n_dual, 1, 1)))
    u = bandlimited(rng, grid.size, 6)
    for tau in TAUS:
        assert np.max(np.abs(Q.op_tau(A, tau)(u).values - u)) / np.max(np.abs(u)) < 1e-6


def test_modulation_symbol_is_multiplication():
    rng = np.random.default_rng(11)
    grid = periodic_grid(32)
    model = model_for(grid)
    x = grid.nodes[:, 0]
    xi0 = 3.0 / grid.axes[0].period
    mod = np.exp(2j * np.pi * xi0 * x)
    A = Q.SymbolField(model, np.repeat(mod[:, None], model.n_dual, axis=1))
    u = bandlimited(rng, grid.size, 5)
    out = Q.op_tau(A, "kohn_nirenberg")(u).values
    assert np.max(np.abs(out - mod * u)) / np.max(np.abs(u)) < 1e-6


def test_zero_symbol_gives_zero_operator():
    grid = periodic_grid(16)
    model = model_for(grid)
    A = Q.SymbolField.zeros(model)
    for tau in TAUS:
        assert np.all(Q.kernel_of_symbol(A, tau).values == 0)
        assert np.all(Q.wig_tau(Q.op_tau(A, tau), tau, model).values == 0)


def test_kohn_nirenberg_kernel_matches_fourier_sum():
    rng = np.random.default_rng(12)
    grid = periodic_grid(16)
    model = model_for(grid)
    A = euclid_symbol(model, rng)
    a = A.values[:, :, 0, 0]
    xi = np.array([p.param for p in model.dual.points])[:, 0]
    nu = model.dual.weights
    x = grid.nodes[:, 0]
    phase = np.exp(2j * np.pi * (x[:, None, None] - x[None, :, None]) * xi[None, None, :])
    expected = np.einsum("xk,xyk,k->xy", a, phase, nu)
    K = Q.kernel_of_symbol(A, "kohn_nirenberg").dense()
    assert np.max(np.abs(K - expected)) / np.max(np.abs(expected)) < 1e-10


@pytest.mark.parametrize("tau", TAUS)
def test_factor_and_direct_paths_agree(tau):
    rng = np.random.default_rng(13)
    grid = periodic_grid(16)
    A = euclid_symbol(model_for(grid), rng)
    K1 = Q.kernel_of_symbol(A, tau)
    K2 = Q.kernel_of_symbol_direct(A, tau)
    assert (K1 - K2).hs_norm() / K1.hs_norm() < 1e-10
    with pytest.raises(Q.QuantizationError):
        Q.op_tau(A, tau, path="other")


def test_spike_input_reads_kernel_column():
    rng = np.random.default_rng(14)
    grid = periodic_grid(16)
    A = euclid_symbol(model_for(grid), rng)
    K = Q.kernel_of_symbol(A, "right").dense()
    j = 5
    spike = np.zeros(grid.size)
    spike[j] = 1.0 / grid.weights[j]
    assert np.allclose(Q.op_tau(A, "right")(spike).values, K[:, j], atol=1e-12)


@pytest.mark.parametrize("tau", TAUS)
def test_wigner_inverts_quantization(tau):
    rng = np.random.default_rng(15)
    grid = periodic_grid(16)
    model = model_for(grid)
    A = euclid_symbol(model, rng)
    back = Q.wig_tau(Q.op_tau(A, tau), tau, model)
    assert (back - A).norm() / A.norm() < 1e-10


# -- rank-one Wigner and duality ---------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_rank_one_wigner_is_sesquilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    grid = periodic_grid(8, half=2.0)
    model = model_for(grid)
    u1, u2, v1, v2 = (SampledFunction(grid, rand_complex(rng, grid.size)) for _ in range(4))
    for tau in TAUS:
        def W(u, v):
            return Q.wig_rank_one(u, v, tau, model).values

        mix_u = SampledFunction(grid, alpha * u1.values + u2.values)
        mix_v = SampledFunction(grid, alpha * v1.values + v2.values)
        scale = 1 + abs(alpha)
        assert np.allclose(W(mix_u, v1), np.conj(alpha) * W(u1, v1) + W(u2, v1), atol=1e-10 * scale)
        assert np.allclose(W(u1, mix_v), alpha * W(u1, v1) + W(u1, v2), atol=1e-10 * scale)


def test_rank_one_wigner_of_zero():
    grid = periodic_grid(8)
    model = model_for(grid)
    zero = SampledFunction(grid, np.zeros(grid.size))
    v = SampledFunction(grid, np.ones(grid.size))
    for tau in TAUS:
        assert np.all(Q.wig_rank_one(zero, v, tau, model).values == 0)


@pytest.mark.parametrize("tau", TAUS)
def test_rank_one_wigner_matches_wigner_of_rank_one_operator(tau):
    rng = np.random.default_rng(16)
    grid = periodic_grid(16)
    model = model_for(grid)
    u, v = (SampledFunction(grid, rand_complex(rng, grid.size)) for _ in range(2))
    W1 = Q.wig_rank_one(u, v, tau, model)
    W2 = Q.wig_tau(Q.upsilon(Q.KernelMatrix.rank_one(v, u)), tau, model)
    assert (W1 - W2).norm() / W2.norm() < 1e-10


@pytest.mark.parametrize("tau", TAUS)
def test_duality_residual_euclidean(tau):
    rng = np.random.default_rng(17)
    grid = periodic_grid(16)
    model = model_for(grid)
    u, v = (SampledFunction(grid, rand_complex(rng, grid.size)) for _ in range(2))
    assert Q.duality_residual(Q.wig_rank_one(u, v, tau, model), u, v, tau) <= 1e-8
    assert Q.duality_residual(euclid_symbol(model, rng), u, v, tau) <= 1e-8


def test_duality_residual_rejects_zero_data():
    grid = periodic_grid(8)
    model = model_for(grid)
    u = SampledFunction(grid, np.ones(grid.size))
    with pytest.raises(Q.UndefinedRatioError):
        Q.duality_residual(Q.SymbolField.zeros(model), u, u, "right")


def test_fourier_wigner_is_transported_wigner():
    rng = np.random.default_rng(18)
    grid = periodic_grid(16)
    model = model_for(grid)
    u, v = (SampledFunction(grid, rand_complex(rng, grid.size)) for _ in range(2))
    for tau in TAUS:
        F1 = Q.fwig(u, v, tau, model)
        F2 = Q.symbol_fourier(Q.wig_rank_one(u, v, tau, model))
        assert np.max(np.abs(F1 - F2)) / np.max(np.abs(F1)) < 1e-10


# -- Schroedinger-type representation ---------------------------------------------------


@pytest.mark.parametrize("tau", TAUS)
def test_sch_agrees_with_factor_path(tau):
    rng = np.random.default_rng(19)
    grid = periodic_grid(16)
    K = Q.KernelMatrix(grid, rand_complex(rng, 16, 16))
    v = SampledFunction(grid, rand_complex(rng, 16))
    out = Q.sch(K, v, tau).values
    assert np.max(np.abs(out - Q.upsilon(Q.c_tau(K, tau))(v).values)) <= 1e-12 * np.max(np.abs(out))
    zero = Q.KernelMatrix(grid, np.zeros((16, 16)))
    assert np.all(Q.sch(zero, v, tau).values == 0)


@pytest.mark.parametrize("tau", TAUS)
def test_sch_of_identity_inducing_kernel(tau):
    rng = np.random.default_rng(20)
    grid = periodic_grid(16)
    K = Q.c_tau_inv(Q.KernelMatrix(grid, np.diag(1.0 / grid.weights)), tau)
    v = SampledFunction(grid, rand_complex(rng, 16))
    assert np.max(np.abs(Q.sch(K, v, tau).values - v.values)) < 1e-10


# -- non-abelian smoke ---------------------------------------------------------------------


def test_affine_duality_is_small_on_coarse_grid():
    from quantgroup.grids import Axis, GroupGrid, lattice_axis
    from quantgroup import testfunctions as T

    grid = GroupGrid(G.affine(), [lattice_axis(8, 0.2, "geometric"), Axis(-8.0, 8.0, 48)])
    model = D.dual_model(grid)
    u = T.sample(grid, {"kind": "gaussian", "center": [1.0, 0.0], "width": [0.5, 1.5]})
    v = T.sample(grid, {"kind": "gaussian", "center": [1.1, 0.3], "width": [0.5, 1.5]})
    assert norm(u) > 0
    for tau in ["kohn_nirenberg", "right"]:
        W = Q.wig_rank_one(u, v, tau, model)
        assert Q.duality_residual(W, u, v, tau) < 5e-2
