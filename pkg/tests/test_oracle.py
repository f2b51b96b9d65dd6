import numpy as np
import pytest

from quantgroup import checks, config
from quantgroup import dual as D
from quantgroup import groups as G
from quantgroup import oracle as O
from quantgroup import quantization as Q
from quantgroup.grids import Axis, GroupGrid, SampledFunction, haar_grid, lattice_axis

TAUS = list(O.ORACLE_TAUS)


def setup(n=1, count=24, half=4.0):
    grid = haar_grid(G.euclidean(n), [{"lo": -half, "hi": half, "count": count}] * n)
    model = D.dual_model(grid)
    xi = np.array([p.param for p in model.dual.points], dtype=float)
    return grid, model, xi


def scalar(grid, model, xi, values):
    return O.ScalarSymbol(grid, xi, model.dual.weights, values)


def band(grid, rng, fraction=0.25):
    return SampledFunction(grid, checks._bandlimited(rng, grid.shape, fraction).ravel())


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_zero_symbol():
    grid, model, xi = setup()
    u = band(grid, np.random.default_rng(0))
    out = O.kn_oracle(scalar(grid, model, xi, np.zeros((grid.size, xi.shape[0]))), u)
    assert np.all(out.values == 0)
    A = Q.SymbolField.zeros(model)
    assert O.pipeline_vs_oracle(A, u, "kohn_nirenberg") == 0.0


@pytest.mark.parametrize("tau", TAUS)
def test_unit_symbol_is_identity(tau):
    grid, model, xi = setup()
    u = band(grid, np.random.default_rng(1))
    out = O.kn_oracle(scalar(grid, model, xi, np.ones((grid.size, xi.shape[0]))), u, tau)
    assert rel(out.values, u.values) <= 1e-6


def test_space_symbol_is_multiplication():
    grid, model, xi = setup()
    rng = np.random.default_rng(2)
    f = checks._bandlimited(rng, grid.shape).ravel()
    u = band(grid, rng)
    out = O.kn_oracle(scalar(grid, model, xi, np.outer(f, np.ones(xi.shape[0]))), u)
    assert rel(out.values, f * u.values) <= 1e-6


@pytest.mark.parametrize("tau", TAUS)
def test_frequency_symbol_is_fourier_multiplier(tau):
    grid, model, xi = setup()
    u = band(grid, np.random.default_rng(3))

    def g(k):
        return np.exp(-0.5 * np.sum(k**2, axis=1))

    target = checks._fourier_multiplier(grid, g, u.values)
    out = O.kn_oracle(scalar(grid, model, xi, np.outer(np.ones(grid.size), g(xi))), u, tau)
    assert rel(out.values, target) <= 1e-6


def test_modulation_identity():
    grid, model, xi = setup()
    u = band(grid, np.random.default_rng(4))
    x = grid.nodes
    mod = np.exp(2j * np.pi * x[:, 0] * 3.0 / grid.axes[0].period)

    def g(k):
        return 1.0 / (1.0 + np.sum(k**2, axis=1))

    out = O.kn_oracle(scalar(grid, model, xi, np.outer(mod, g(xi))), u)
    ref = mod * checks._fourier_multiplier(grid, g, u.values)
    assert rel(out.values, ref) <= 1e-6


@pytest.mark.parametrize("tau", TAUS)
def test_pipeline_matches_oracle_on_random_data(tau):
    grid, model, _ = setup()
    rng = np.random.default_rng(5)
    cfg = config.from_dict({"group": "euclidean(1)", "grid": {"axes": [{"lo": -4, "hi": 4, "count": 24}]}})
    for _ in range(3):
        A = checks.random_symbol(cfg, model, rng)
        assert O.pipeline_vs_oracle(A, band(grid, rng), tau) <= 1e-8


def test_weyl_on_gaussian_data():
    # Resolved Gaussians: no content near the Nyquist mode or the box edge.
    grid, model, xi = setup(count=64, half=8.0)
    x = grid.nodes[:, 0]
    vals = np.exp(-(x[:, None] ** 2) / 2 - (xi[None, :, 0] - 0.2) ** 2)
    A = Q.SymbolField(model, vals[:, :, None, None])
    u = SampledFunction(grid, np.exp(-((x - 0.5) ** 2)))
    assert O.pipeline_vs_oracle(A, u, "euclidean_weyl") <= 1e-8


def test_two_dimensional_agreement():
    grid, model, _ = setup(n=2, count=8, half=2.0)
    rng = np.random.default_rng(6)
    cfg = config.from_dict({"group": "euclidean(2)",
                            "grid": {"axes": [{"lo": -2, "hi": 2, "count": 8}] * 2}})
    A = checks.random_symbol(cfg, model, rng)
    for tau in TAUS:
        assert O.pipeline_vs_oracle(A, band(grid, rng, 0.5), tau) <= 1e-8


def test_oracle_rejects_other_groups():
    grid = GroupGrid(G.affine(), [lattice_axis(2, 0.2, "geometric"), Axis(-1.0, 1.0, 4)])
    with pytest.raises(O.UnsupportedGroupError):
        O.ScalarSymbol(grid, np.zeros((1, 2)), np.ones(1), np.zeros((grid.size, 1)))


def test_oracle_rejects_unknown_ordering():
    grid, model, xi = setup(count=8)
    a = scalar(grid, model, xi, np.ones((grid.size, xi.shape[0])))
    with pytest.raises(ValueError):
        O.kn_oracle(a, np.ones(grid.size), "symmetric")
